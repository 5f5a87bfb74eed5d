//! Reverse-mode automatic differentiation over dense `f64` tensors, with the
//! model blocks the tasks need.

mod checkpoint;
mod graph;
mod mlp;
mod optim;
mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use graph::{Graph, Var};
pub use mlp::{build_mlp, Activation, Mlp};
pub use optim::{make_optimizer, Adam, Optimizer, OptimizerKind, Sgd};
pub use tensor::{argmax, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("softmax over empty axis {0}")]
    EmptyAxis(usize),
    #[error("loss must be scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("layer {0} has zero width")]
    ZeroWidth(usize),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Registry of trainable tensors and their gradient buffers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        let grad = Tensor::zeros(&value.shape);
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].grad
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Total scalar count.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }
}

/// Compares reverse-mode gradients of `f` at the current parameters with
/// central differences of step `eps`. Returns the largest
/// `|g_ad − g_fd| / max(1, |g_fd|)`.
pub fn grad_check<F>(store: &mut ParamStore, eps: f64, f: F) -> Result<f64, AdError>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var, AdError>,
{
    store.zero_grad();
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    g.backward(loss, store)?;
    let ad: Vec<Tensor> = store.params.iter().map(|p| p.grad.clone()).collect();
    let eval = |store: &ParamStore| -> Result<f64, AdError> {
        let mut g = Graph::new();
        let l = f(&mut g, store)?;
        g.value(l).item().ok_or_else(|| AdError::NonScalarLoss(g.value(l).shape.clone()))
    };
    let mut worst: f64 = 0.0;
    for id in 0..store.params.len() {
        for k in 0..store.params[id].value.numel() {
            let orig = store.params[id].value.data[k];
            store.params[id].value.data[k] = orig + eps;
            let up = eval(store)?;
            store.params[id].value.data[k] = orig - eps;
            let down = eval(store)?;
            store.params[id].value.data[k] = orig;
            let fd = (up - down) / (2.0 * eps);
            let a = ad[id].data[k];
            if !fd.is_finite() || !a.is_finite() {
                return Err(AdError::NonFinite(store.params[id].name.clone()));
            }
            worst = worst.max((a - fd).abs() / fd.abs().max(1.0));
        }
    }
    store.zero_grad();
    Ok(worst)
}

/// Mean cross-entropy of `logits` rows (shape `[n, k]`) against `targets`.
pub fn cross_entropy(g: &mut Graph, logits: Var, targets: &[usize]) -> Result<Var, AdError> {
    let t = g.value(logits);
    if t.rank() != 2 || t.shape[0] != targets.len() {
        return Err(AdError::Shape(format!(
            "cross_entropy: logits {:?} for {} targets",
            t.shape,
            targets.len()
        )));
    }
    let k = t.shape[1];
    let lp = g.log_softmax(logits, 1)?;
    let idx: Vec<usize> = targets.iter().enumerate().map(|(i, &y)| i * k + y).collect();
    let picked = g.gather(lp, &idx)?;
    let m = g.mean(picked);
    Ok(g.scale(m, -1.0))
}
