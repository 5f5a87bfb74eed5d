use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AdError, Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

/// Fully connected network with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub widths: Vec<usize>,
    pub activation: Activation,
    /// (weight `[in, out]`, bias `[out]`) per layer.
    pub layers: Vec<(ParamId, ParamId)>,
}

/// Registers the layers of an MLP in `store`, initialized uniformly in
/// ±√(1/fan_in).
pub fn build_mlp<R: Rng>(
    store: &mut ParamStore,
    name: &str,
    widths: &[usize],
    activation: Activation,
    rng: &mut R,
) -> Result<Mlp, AdError> {
    if widths.len() < 2 {
        return Err(AdError::Shape(format!("an MLP needs at least 2 widths, got {widths:?}")));
    }
    if let Some(i) = widths.iter().position(|&w| w == 0) {
        return Err(AdError::ZeroWidth(i));
    }
    let mut layers = Vec::new();
    for (i, w) in widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (1.0 / fan_in as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-bound..=bound)).collect::<Vec<f64>>();
        let wt = Tensor::matrix(fan_in, fan_out, draw(fan_in * fan_out))?;
        let b = Tensor::vector(draw(fan_out));
        let wid = store.add(&format!("{name}.{i}.weight"), wt);
        let bid = store.add(&format!("{name}.{i}.bias"), b);
        layers.push((wid, bid));
    }
    Ok(Mlp {
        widths: widths.to_vec(),
        activation,
        layers,
    })
}

impl Mlp {
    pub fn n_inputs(&self) -> usize {
        self.widths[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Logits for a batch `x` of shape `[batch, n_inputs]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var, AdError> {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let wv = g.param(store, w);
            let bv = g.param(store, b);
            let z = g.matmul(h, wv)?;
            h = g.add_row(z, bv)?;
            if i + 1 < self.layers.len() {
                h = match self.activation {
                    Activation::Relu => g.relu(h),
                    Activation::Tanh => g.tanh(h),
                };
            }
        }
        Ok(h)
    }
}
