//! IDX files: big-endian magic and dimensions followed by raw u8 values.

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub n: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major pixels, image after image.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let sz = self.rows * self.cols;
        &self.pixels[i * sz..(i + 1) * sz]
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, String> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format!("header truncated at byte {at}"))
}

fn payload(bytes: &[u8], header: usize, expected: usize) -> Result<Vec<u8>, String> {
    let body = &bytes[header..];
    if body.len() < expected {
        return Err(format!("truncated payload: {} of {expected} bytes", body.len()));
    }
    if body.len() > expected {
        return Err(format!("{} trailing bytes after payload", body.len() - expected));
    }
    Ok(body.to_vec())
}

pub fn read_idx_images(bytes: &[u8]) -> Result<IdxImages, String> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(format!("bad magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"));
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    if rows == 0 || cols == 0 {
        return Err(format!("bad image dimensions {rows}x{cols}"));
    }
    let expected = n
        .checked_mul(rows * cols)
        .ok_or_else(|| "image dimensions overflow".to_string())?;
    Ok(IdxImages {
        n,
        rows,
        cols,
        pixels: payload(bytes, 16, expected)?,
    })
}

pub fn read_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, String> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(format!("bad magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"));
    }
    let n = be_u32(bytes, 4)? as usize;
    payload(bytes, 8, n)
}
