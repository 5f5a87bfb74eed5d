//! Flat binary parameter files: magic `NCKP`, version, then per parameter
//! its name, rank, extents, and little-endian values.

use std::io::{Read, Write};
use std::path::Path;

use super::{AdError, ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NCKP";
const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(store: &ParamStore, mut w: W) -> Result<(), AdError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for p in store.params() {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(p.value.shape.len() as u32).to_le_bytes())?;
        for &e in &p.value.shape {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in &p.value.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn take<const N: usize>(buf: &[u8], at: &mut usize) -> Result<[u8; N], AdError> {
    let end = *at + N;
    let bytes = buf
        .get(*at..end)
        .ok_or_else(|| AdError::Checkpoint(format!("truncated at byte {at}")))?;
    *at = end;
    Ok(bytes.try_into().expect("slice has length N"))
}

/// Parameters in file order.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>, AdError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut at = 0;
    if &take::<4>(&buf, &mut at)? != CHECKPOINT_MAGIC {
        return Err(AdError::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&buf, &mut at)?);
    if version != VERSION {
        return Err(AdError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut out = Vec::new();
    while at < buf.len() {
        let len = u32::from_le_bytes(take(&buf, &mut at)?) as usize;
        let name = buf
            .get(at..at + len)
            .ok_or_else(|| AdError::Checkpoint("truncated name".into()))?;
        let name = String::from_utf8(name.to_vec()).map_err(|_| AdError::Checkpoint("name is not UTF-8".into()))?;
        at += len;
        let rank = u32::from_le_bytes(take(&buf, &mut at)?) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(take(&buf, &mut at)?) as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(take(&buf, &mut at)?));
        }
        out.push((name, Tensor { shape, data }));
    }
    Ok(out)
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<(), AdError> {
    let f = std::fs::File::create(path)?;
    write_checkpoint(store, std::io::BufWriter::new(f))
}

/// Overwrites the values of same-named parameters in `store`.
pub fn load_checkpoint(store: &mut ParamStore, path: &Path) -> Result<(), AdError> {
    let entries = read_checkpoint(std::fs::File::open(path)?)?;
    for (name, t) in entries {
        let id = store
            .find(&name)
            .ok_or_else(|| AdError::Checkpoint(format!("unknown parameter `{name}`")))?;
        if store.value(id).shape != t.shape {
            return Err(AdError::Checkpoint(format!(
                "`{name}` has shape {:?}, file has {:?}",
                store.value(id).shape,
                t.shape
            )));
        }
        *store.value_mut(id) = t;
    }
    Ok(())
}
