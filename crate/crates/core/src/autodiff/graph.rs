use super::tensor::{axis_split, Tensor};
use super::{AdError, ParamId, ParamStore};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Matrix plus a row vector broadcast over rows.
    AddRow(Var, Var),
    Affine { x: Var, scale: f64 },
    MatMul(Var, Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Softmax { x: Var, axis: usize },
    LogSoftmax { x: Var, axis: usize },
    SegmentSoftmax { x: Var, segments: Vec<(usize, usize)> },
    SegmentLogSoftmax { x: Var, segments: Vec<(usize, usize)> },
    Gather { x: Var, index: Vec<usize> },
    SumAll(Var),
    SumAxis { x: Var, axis: usize },
    Min(Var, Var),
    Max(Var, Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    Reshape(Var),
    /// Flattened values of each input, in order.
    Concat(Vec<Var>),
    /// Scalar computed outside the graph with a known gradient.
    External { x: Var, grad: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Tape of operations in creation order; parents always precede children.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<(), AdError> {
    if a.shape != b.shape {
        return Err(AdError::Shape(format!("{op}: {:?} vs {:?}", a.shape, b.shape)));
    }
    Ok(())
}

fn softmax_into(x: &[f64], out: &mut [f64]) {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

fn log_softmax_into(x: &[f64], out: &mut [f64]) {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v - lse;
    }
}

/// Applies `f` to each slice along `axis`, gathering and scattering strided
/// values.
fn along_axis(x: &Tensor, axis: usize, out: &mut [f64], f: impl Fn(&[f64], &mut [f64])) -> Result<(), AdError> {
    let (outer, n, inner) = axis_split(&x.shape, axis)?;
    if n == 0 {
        return Err(AdError::EmptyAxis(axis));
    }
    let mut buf_in = vec![0.0; n];
    let mut buf_out = vec![0.0; n];
    for o in 0..outer {
        for i in 0..inner {
            for k in 0..n {
                buf_in[k] = x.data[(o * n + k) * inner + i];
            }
            f(&buf_in, &mut buf_out);
            for k in 0..n {
                out[(o * n + k) * inner + i] = buf_out[k];
            }
        }
    }
    Ok(())
}

fn check_segments(x: &Tensor, segments: &[(usize, usize)]) -> Result<(), AdError> {
    for &(start, len) in segments {
        if len == 0 {
            return Err(AdError::EmptyAxis(start));
        }
        if start + len > x.numel() {
            return Err(AdError::Shape(format!(
                "segment {start}+{len} exceeds {} values",
                x.numel()
            )));
        }
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Constant, t)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(Op::Param(id), store.value(id).clone())
    }

    fn zip(&mut self, op: Op, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Var, AdError> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(name, ta, tb)?;
        let data = ta.data.iter().zip(&tb.data).map(|(&x, &y)| f(x, y)).collect();
        let shape = ta.shape.clone();
        Ok(self.push(op, Tensor { shape, data }))
    }

    fn map(&mut self, op: Op, x: Var, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(x);
        let out = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|&v| f(v)).collect(),
        };
        self.push(op, out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.zip(Op::Add(a, b), a, b, "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.zip(Op::Sub(a, b), a, b, "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.zip(Op::Mul(a, b), a, b, "mul", |x, y| x * y)
    }

    pub fn min(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.zip(Op::Min(a, b), a, b, "min", f64::min)
    }

    pub fn max(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.zip(Op::Max(a, b), a, b, "max", f64::max)
    }

    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var, AdError> {
        let (tm, tr) = (self.value(m), self.value(row));
        if tm.rank() != 2 || tr.numel() != tm.shape[1] {
            return Err(AdError::Shape(format!("add_row: {:?} + {:?}", tm.shape, tr.shape)));
        }
        let c = tm.shape[1];
        let data = tm.data.iter().enumerate().map(|(i, &v)| v + tr.data[i % c]).collect();
        let shape = tm.shape.clone();
        Ok(self.push(Op::AddRow(m, row), Tensor { shape, data }))
    }

    /// `scale·x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        self.map(Op::Affine { x, scale }, x, |v| scale * v + shift)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.affine(x, s, 0.0)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0] {
            return Err(AdError::Shape(format!("matmul: {:?} · {:?}", ta.shape, tb.shape)));
        }
        let (n, k, m) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            for p in 0..k {
                let a_ip = ta.data[i * k + p];
                if a_ip == 0.0 {
                    continue;
                }
                let row = &tb.data[p * m..(p + 1) * m];
                let out = &mut data[i * m..(i + 1) * m];
                for (o, &b) in out.iter_mut().zip(row) {
                    *o += a_ip * b;
                }
            }
        }
        Ok(self.push(Op::MatMul(a, b), Tensor { shape: vec![n, m], data }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(Op::Relu(x), x, |v| v.max(0.0))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(Op::Tanh(x), x, f64::tanh)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map(Op::Exp(x), x, f64::exp)
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.map(Op::Log(x), x, f64::ln)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.map(Op::Clamp { x, lo, hi }, x, |v| v.clamp(lo, hi))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, AdError> {
        let t = self.value(x);
        let mut out = Tensor::zeros(&t.shape);
        along_axis(t, axis, &mut out.data, softmax_into)?;
        Ok(self.push(Op::Softmax { x, axis }, out))
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var, AdError> {
        let t = self.value(x);
        let mut out = Tensor::zeros(&t.shape);
        along_axis(t, axis, &mut out.data, log_softmax_into)?;
        Ok(self.push(Op::LogSoftmax { x, axis }, out))
    }

    /// Softmax over each `(start, len)` range of the flattened input; the
    /// output concatenates the ranges.
    pub fn segment_softmax(&mut self, x: Var, segments: &[(usize, usize)]) -> Result<Var, AdError> {
        let t = self.value(x);
        check_segments(t, segments)?;
        let mut out = Vec::with_capacity(segments.iter().map(|s| s.1).sum());
        for &(s, n) in segments {
            let mut buf = vec![0.0; n];
            softmax_into(&t.data[s..s + n], &mut buf);
            out.extend(buf);
        }
        let segments = segments.to_vec();
        Ok(self.push(Op::SegmentSoftmax { x, segments }, Tensor::vector(out)))
    }

    pub fn segment_log_softmax(&mut self, x: Var, segments: &[(usize, usize)]) -> Result<Var, AdError> {
        let t = self.value(x);
        check_segments(t, segments)?;
        let mut out = Vec::with_capacity(segments.iter().map(|s| s.1).sum());
        for &(s, n) in segments {
            let mut buf = vec![0.0; n];
            log_softmax_into(&t.data[s..s + n], &mut buf);
            out.extend(buf);
        }
        let segments = segments.to_vec();
        Ok(self.push(Op::SegmentLogSoftmax { x, segments }, Tensor::vector(out)))
    }

    /// Flat-index gather into a vector.
    pub fn gather(&mut self, x: Var, index: &[usize]) -> Result<Var, AdError> {
        let t = self.value(x);
        if let Some(&bad) = index.iter().find(|&&i| i >= t.numel()) {
            return Err(AdError::Shape(format!("gather index {bad} out of {} values", t.numel())));
        }
        let data = index.iter().map(|&i| t.data[i]).collect();
        Ok(self.push(
            Op::Gather {
                x,
                index: index.to_vec(),
            },
            Tensor::vector(data),
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        self.push(Op::SumAll(x), Tensor::scalar(s))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var, AdError> {
        let t = self.value(x);
        let (outer, n, inner) = axis_split(&t.shape, axis)?;
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                for i in 0..inner {
                    data[o * inner + i] += t.data[(o * n + k) * inner + i];
                }
            }
        }
        let mut shape = t.shape.clone();
        shape.remove(axis);
        Ok(self.push(Op::SumAxis { x, axis }, Tensor { shape, data }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AdError> {
        let t = Tensor::new(shape.to_vec(), self.value(x).data.clone())?;
        Ok(self.push(Op::Reshape(x), t))
    }

    /// Flat vector of the values of `parts`, in order.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let data = parts.iter().flat_map(|&p| self.value(p).data.iter().copied()).collect();
        self.push(Op::Concat(parts.to_vec()), Tensor::vector(data))
    }

    /// Scalar node with value `value` and gradient `grad` with respect to
    /// `x`, for losses evaluated outside the graph.
    pub fn external(&mut self, x: Var, value: f64, grad: Vec<f64>) -> Result<Var, AdError> {
        if grad.len() != self.value(x).numel() {
            return Err(AdError::Shape(format!(
                "external gradient has {} values for {} inputs",
                grad.len(),
                self.value(x).numel()
            )));
        }
        Ok(self.push(Op::External { x, grad }, Tensor::scalar(value)))
    }

    /// Accumulates d`loss`/dθ into the gradient buffers of `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<(), AdError> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(AdError::NonScalarLoss(lt.shape.clone()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            let val = &node.value.data;
            let mut send = |v: Var, contrib: &dyn Fn(&mut [f64])| {
                let slot = adj[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
                contrib(slot);
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    for (d, s) in store.grad_mut(*id).data.iter_mut().zip(&g) {
                        *d += s;
                    }
                }
                Op::Add(a, b) => {
                    send(*a, &|s| s.iter_mut().zip(&g).for_each(|(d, x)| *d += x));
                    send(*b, &|s| s.iter_mut().zip(&g).for_each(|(d, x)| *d += x));
                }
                Op::Sub(a, b) => {
                    send(*a, &|s| s.iter_mut().zip(&g).for_each(|(d, x)| *d += x));
                    send(*b, &|s| s.iter_mut().zip(&g).for_each(|(d, x)| *d -= x));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.value(*a).data, &self.value(*b).data);
                    send(*a, &|s| {
                        for k in 0..s.len() {
                            s[k] += g[k] * vb[k];
                        }
                    });
                    send(*b, &|s| {
                        for k in 0..s.len() {
                            s[k] += g[k] * va[k];
                        }
                    });
                }
                Op::AddRow(m, r) => {
                    send(*m, &|s| s.iter_mut().zip(&g).for_each(|(d, x)| *d += x));
                    let c = self.value(*r).numel();
                    send(*r, &|s| {
                        for (k, x) in g.iter().enumerate() {
                            s[k % c] += x;
                        }
                    });
                }
                Op::Affine { x, scale } => {
                    send(*x, &|s| s.iter_mut().zip(&g).for_each(|(d, v)| *d += scale * v));
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (n, k, m) = (ta.shape[0], ta.shape[1], tb.shape[1]);
                    send(*a, &|s| {
                        for i in 0..n {
                            for p in 0..k {
                                let mut acc = 0.0;
                                for j in 0..m {
                                    acc += g[i * m + j] * tb.data[p * m + j];
                                }
                                s[i * k + p] += acc;
                            }
                        }
                    });
                    send(*b, &|s| {
                        for i in 0..n {
                            for p in 0..k {
                                let a_ip = ta.data[i * k + p];
                                if a_ip == 0.0 {
                                    continue;
                                }
                                for j in 0..m {
                                    s[p * m + j] += a_ip * g[i * m + j];
                                }
                            }
                        }
                    });
                }
                Op::Relu(x) => {
                    let vx = &self.value(*x).data;
                    send(*x, &|s| {
                        for k in 0..s.len() {
                            if vx[k] > 0.0 {
                                s[k] += g[k];
                            }
                        }
                    });
                }
                Op::Tanh(x) => send(*x, &|s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * (1.0 - val[k] * val[k]);
                    }
                }),
                Op::Exp(x) => send(*x, &|s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * val[k];
                    }
                }),
                Op::Log(x) => {
                    let vx = &self.value(*x).data;
                    send(*x, &|s| {
                        for k in 0..s.len() {
                            s[k] += g[k] / vx[k];
                        }
                    });
                }
                Op::Clamp { x, lo, hi } => {
                    let vx = &self.value(*x).data;
                    send(*x, &|s| {
                        for k in 0..s.len() {
                            if vx[k] > *lo && vx[k] < *hi {
                                s[k] += g[k];
                            }
                        }
                    });
                }
                Op::Softmax { x, axis } => {
                    let shape = &node.value.shape;
                    send(*x, &|s| {
                        let (outer, n, inner) = axis_split(shape, *axis).expect("checked in forward");
                        for o in 0..outer {
                            for i in 0..inner {
                                let at = |k: usize| (o * n + k) * inner + i;
                                let dot: f64 = (0..n).map(|k| g[at(k)] * val[at(k)]).sum();
                                for k in 0..n {
                                    s[at(k)] += val[at(k)] * (g[at(k)] - dot);
                                }
                            }
                        }
                    });
                }
                Op::LogSoftmax { x, axis } => {
                    let shape = &node.value.shape;
                    send(*x, &|s| {
                        let (outer, n, inner) = axis_split(shape, *axis).expect("checked in forward");
                        for o in 0..outer {
                            for i in 0..inner {
                                let at = |k: usize| (o * n + k) * inner + i;
                                let total: f64 = (0..n).map(|k| g[at(k)]).sum();
                                for k in 0..n {
                                    s[at(k)] += g[at(k)] - val[at(k)].exp() * total;
                                }
                            }
                        }
                    });
                }
                Op::SegmentSoftmax { x, segments } => send(*x, &|s| {
                    let mut off = 0;
                    for &(start, n) in segments {
                        let dot: f64 = (0..n).map(|k| g[off + k] * val[off + k]).sum();
                        for k in 0..n {
                            s[start + k] += val[off + k] * (g[off + k] - dot);
                        }
                        off += n;
                    }
                }),
                Op::SegmentLogSoftmax { x, segments } => send(*x, &|s| {
                    let mut off = 0;
                    for &(start, n) in segments {
                        let total: f64 = g[off..off + n].iter().sum();
                        for k in 0..n {
                            s[start + k] += g[off + k] - val[off + k].exp() * total;
                        }
                        off += n;
                    }
                }),
                Op::Gather { x, index } => send(*x, &|s| {
                    for (k, &i) in index.iter().enumerate() {
                        s[i] += g[k];
                    }
                }),
                Op::SumAll(x) => send(*x, &|s| s.iter_mut().for_each(|d| *d += g[0])),
                Op::SumAxis { x, axis } => {
                    let shape = &self.value(*x).shape;
                    send(*x, &|s| {
                        let (outer, n, inner) = axis_split(shape, *axis).expect("checked in forward");
                        for o in 0..outer {
                            for k in 0..n {
                                for i in 0..inner {
                                    s[(o * n + k) * inner + i] += g[o * inner + i];
                                }
                            }
                        }
                    });
                }
                Op::Min(a, b) | Op::Max(a, b) => {
                    let is_min = matches!(node.op, Op::Min(..));
                    let (va, vb) = (&self.value(*a).data, &self.value(*b).data);
                    // ties route the gradient to the left operand
                    let left = |k: usize| if is_min { va[k] <= vb[k] } else { va[k] >= vb[k] };
                    send(*a, &|s| {
                        for k in 0..s.len() {
                            if left(k) {
                                s[k] += g[k];
                            }
                        }
                    });
                    send(*b, &|s| {
                        for k in 0..s.len() {
                            if !left(k) {
                                s[k] += g[k];
                            }
                        }
                    });
                }
                Op::Reshape(x) => send(*x, &|s| s.iter_mut().zip(&g).for_each(|(d, v)| *d += v)),
                Op::Concat(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let n = self.value(p).numel();
                        let slice = &g[at..at + n];
                        send(p, &|s| s.iter_mut().zip(slice).for_each(|(d, v)| *d += v));
                        at += n;
                    }
                }
                Op::External { x, grad } => {
                    send(*x, &|s| s.iter_mut().zip(grad).for_each(|(d, v)| *d += g[0] * v));
                }
            }
        }
        Ok(())
    }
}
