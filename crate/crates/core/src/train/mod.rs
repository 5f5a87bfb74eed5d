//! Training-time constraint integration: Lagrangian primal-dual updates,
//! sampling loss, and exact semantic loss around any model that emits
//! per-variable logits.

mod losses;
mod multipliers;

pub use losses::{sampling_loss, semantic_loss_exact, semantic_space, Grouping, LossGrad, Sampling, DEFAULT_SEMANTIC_CAP, EPS_FLOOR};
pub use multipliers::{MultiplierMode, Multipliers};

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{build_mlp, make_optimizer, Activation, AdError, Graph, Mlp, Optimizer, OptimizerKind, ParamId, ParamStore, Tensor, Var};
use crate::compile::{to_soft_violation, CompileError, SoftExpr, TNorm};
use crate::lang::{eval_ground, ground_program_with_cap, ConstraintProgram, GroundProgram, Instance, LangError, DEFAULT_GROUND_CAP};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error("assignment space of {size} exceeds the cap of {cap}; use the sampling loss instead")]
    SpaceTooLarge { size: u128, cap: u128 },
    #[error("loss diverged in epoch {epoch}; parameters restored to the last finite epoch")]
    Diverged { epoch: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMethod {
    #[default]
    None,
    Pd,
    SampL,
    SemL,
}

impl TrainMethod {
    pub fn name(self) -> &'static str {
        match self {
            TrainMethod::None => "none",
            TrainMethod::Pd => "pd",
            TrainMethod::SampL => "sampl",
            TrainMethod::SemL => "seml",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub method: TrainMethod,
    /// Samples per batch for the sampling loss.
    pub n_samples: usize,
    /// Enumerate each term's scope instead of drawing samples.
    pub exhaustive_samples: bool,
    pub grouping: Grouping,
    pub tnorm: TNorm,
    pub multipliers: MultiplierMode,
    pub eta_lambda: f64,
    /// Scale of the constraint term for the sampling and semantic losses.
    pub constraint_weight: f64,
    pub semantic_cap: u64,
    /// Stop once argmax predictions satisfy every training constraint.
    pub stop_when_satisfied: bool,
    /// How cross-entropy and constraint terms are pooled within a batch.
    pub reduction: Reduction,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Average over supervised positions and over constraint terms.
    #[default]
    Mean,
    /// Sum over both.
    Sum,
}

impl Reduction {
    fn scale(self, n: usize) -> f64 {
        match self {
            Reduction::Mean => 1.0 / n.max(1) as f64,
            Reduction::Sum => 1.0,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            lr: 1e-2,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            method: TrainMethod::None,
            n_samples: 100,
            exhaustive_samples: false,
            grouping: Grouping::PerConstraint,
            tnorm: TNorm::Product,
            multipliers: MultiplierMode::PerTemplate,
            eta_lambda: 0.01,
            constraint_weight: 1.0,
            semantic_cap: DEFAULT_SEMANTIC_CAP as u64,
            stop_when_satisfied: false,
            reduction: Reduction::Mean,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("learning rate must be positive");
        }
        if self.n_samples == 0 {
            return bad("sample count must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(self.eta_lambda >= 0.0) {
            return bad("multiplier step size must be nonnegative");
        }
        if !(self.constraint_weight >= 0.0) {
            return bad("constraint weight must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Net {
    Mlp(Mlp),
    /// A free logits vector, independent of the inputs.
    Logits(ParamId),
}

/// A network applied row-wise to one of the batch input tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub input: usize,
    pub net: Net,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum HeadSpec {
    Mlp {
        input: usize,
        widths: Vec<usize>,
        activation: Activation,
    },
    Logits {
        n: usize,
        scale: f64,
    },
}

/// Heads whose flattened outputs are concatenated in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub store: ParamStore,
    pub heads: Vec<Head>,
}

impl Model {
    pub fn build(spec: &[HeadSpec], seed: u64) -> Result<Model, AdError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut heads = Vec::with_capacity(spec.len());
        for (i, h) in spec.iter().enumerate() {
            heads.push(match h {
                HeadSpec::Mlp {
                    input,
                    widths,
                    activation,
                } => Head {
                    input: *input,
                    net: Net::Mlp(build_mlp(&mut store, &format!("head{i}"), widths, *activation, &mut rng)?),
                },
                HeadSpec::Logits { n, scale } => {
                    let data = (0..*n).map(|_| rng.random_range(-*scale..=*scale)).collect();
                    Head {
                        input: 0,
                        net: Net::Logits(store.add(&format!("head{i}.logits"), Tensor::vector(data))),
                    }
                }
            });
        }
        Ok(Model { store, heads })
    }

    pub fn mlp(widths: &[usize], activation: Activation, seed: u64) -> Result<Model, AdError> {
        Model::build(
            &[HeadSpec::Mlp {
                input: 0,
                widths: widths.to_vec(),
                activation,
            }],
            seed,
        )
    }

    /// `n` logits drawn uniformly in ±`scale`.
    pub fn logits(n: usize, scale: f64, seed: u64) -> Model {
        Model::build(&[HeadSpec::Logits { n, scale }], seed).expect("logits heads cannot fail")
    }

    pub fn n_params(&self) -> usize {
        self.store.count()
    }

    pub fn forward(&self, g: &mut Graph, inputs: &[Tensor]) -> Result<Var, AdError> {
        let mut outs = Vec::with_capacity(self.heads.len());
        for h in &self.heads {
            outs.push(match &h.net {
                Net::Mlp(m) => {
                    let t = inputs
                        .get(h.input)
                        .ok_or_else(|| AdError::Shape(format!("no input tensor {}", h.input)))?;
                    let x = g.constant(t.clone());
                    m.forward(g, &self.store, x)?
                }
                Net::Logits(id) => g.param(&self.store, *id),
            });
        }
        Ok(if outs.len() == 1 { outs[0] } else { g.concat(&outs) })
    }
}

/// Model inputs plus the ground constraints over the decision variables they
/// produce. Variable `v` reads `n_labels` logits starting at flat position
/// `offsets[v]` of the model output.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<Tensor>,
    pub program: GroundProgram,
    pub offsets: Vec<usize>,
    /// Supervision target per variable.
    pub targets: Vec<Option<usize>>,
    /// Ground constraints dropped because they touch variables without
    /// model outputs.
    pub skipped: usize,
    /// Batch-independent name of each ground constraint, when the source
    /// knows which example it came from.
    pub ids: Option<Vec<String>>,
}

impl Batch {
    pub fn segments(&self) -> Vec<(usize, usize)> {
        self.offsets
            .iter()
            .zip(&self.program.vars)
            .map(|(&o, v)| (o, v.n_labels()))
            .collect()
    }
}

/// Grounds `p` for a batch whose first `n_declared` instance variables have
/// model outputs; constraints touching any other variable are dropped.
pub fn ground_batch(p: &ConstraintProgram, inst: &Instance) -> Result<(GroundProgram, usize), TrainError> {
    let n_declared = inst.variables.len();
    let mut g = ground_program_with_cap(p, inst, DEFAULT_GROUND_CAP)?;
    let before = g.constraints.len();
    g.constraints.retain(|c| c.scope.iter().all(|&v| v < n_declared));
    let skipped = before - g.constraints.len();
    if skipped > 0 {
        log::warn!("skipped {skipped} ground constraints over variables outside the batch");
    }
    g.vars.truncate(n_declared);
    Ok((g, skipped))
}

pub trait BatchSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn batch(&self, examples: &[usize]) -> Result<Batch, TrainError>;
}

/// Per-variable probabilities of `model` on `batch`.
pub fn predict(model: &Model, batch: &Batch) -> Result<Vec<Vec<f64>>, TrainError> {
    let mut g = Graph::new();
    let logits = model.forward(&mut g, &batch.inputs)?;
    let probs = g.segment_softmax(logits, &batch.segments())?;
    Ok(split_rows(&g.value(probs).data, &batch.program))
}

fn split_rows(flat: &[f64], g: &GroundProgram) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(g.vars.len());
    let mut at = 0;
    for v in &g.vars {
        out.push(flat[at..at + v.n_labels()].to_vec());
        at += v.n_labels();
    }
    out
}

/// Fraction of ground constraints violated by the per-variable argmax.
pub fn argmax_violation(probs: &[Vec<f64>], g: &GroundProgram) -> f64 {
    if g.constraints.is_empty() {
        return 0.0;
    }
    let a: Vec<usize> = probs.iter().map(|r| crate::autodiff::argmax(r)).collect();
    let sat = eval_ground(g, &a).expect("argmax is a complete assignment");
    sat.iter().filter(|&&b| !b).count() as f64 / sat.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub task: f64,
    pub constraint: f64,
}

/// One descent step on task cross-entropy plus a constraint term computed
/// from the probabilities by `constraint`.
fn descent_step(
    model: &mut Model,
    batch: &Batch,
    opt: &mut dyn Optimizer,
    reduction: Reduction,
    constraint: impl FnOnce(&[Vec<f64>]) -> Result<Option<LossGrad>, TrainError>,
) -> Result<(StepLosses, Vec<Vec<f64>>), TrainError> {
    model.store.zero_grad();
    let mut g = Graph::new();
    let logits = model.forward(&mut g, &batch.inputs)?;
    let segs = batch.segments();
    let logp = g.segment_log_softmax(logits, &segs)?;
    let probs_v = g.segment_softmax(logits, &segs)?;
    let probs = split_rows(&g.value(probs_v).data, &batch.program);

    let mut pos = Vec::new();
    let mut at = 0;
    for (v, var) in batch.program.vars.iter().enumerate() {
        if let Some(y) = batch.targets[v] {
            pos.push(at + y);
        }
        at += var.n_labels();
    }
    let task = if pos.is_empty() {
        None
    } else {
        let picked = g.gather(logp, &pos)?;
        let m = g.sum(picked);
        Some(g.scale(m, -reduction.scale(pos.len())))
    };
    let cons = match constraint(&probs)? {
        Some(lg) => Some(g.external(probs_v, lg.value, lg.grad.concat())?),
        None => None,
    };
    let total = match (task, cons) {
        (Some(t), Some(c)) => Some(g.add(t, c)?),
        (Some(t), None) => Some(t),
        (None, Some(c)) => Some(c),
        (None, None) => None,
    };
    let losses = StepLosses {
        task: task.map_or(0.0, |t| g.value(t).data[0]),
        constraint: cons.map_or(0.0, |c| g.value(c).data[0]),
    };
    if let Some(t) = total {
        g.backward(t, &mut model.store)?;
        opt.step(&mut model.store);
    }
    Ok((losses, probs))
}

/// Constraint term `Σ_k λ_k · violation_k`, divided by the number of
/// ground constraints under [`Reduction::Mean`], and its gradient.
fn pd_term(soft: &SoftExpr, batch: &Batch, m: &Multipliers, probs: &[Vec<f64>], reduction: Reduction) -> LossGrad {
    let g = &batch.program;
    let k = reduction.scale(g.constraints.len());
    let weights: Vec<f64> = g
        .constraints
        .iter()
        .enumerate()
        .map(|(i, c)| m.get_with(c, batch.ids.as_ref().map(|x| x[i].as_str())) * k)
        .collect();
    let (viol, grad) = soft.violation_grad(probs, &weights);
    LossGrad {
        value: viol.iter().zip(&weights).map(|(v, w)| v * w).sum(),
        grad,
        terms: viol.len(),
        floored: 0,
    }
}

/// Descent on task loss plus weighted soft violations, then one ascent
/// step on the multipliers from violations at the updated parameters.
pub fn primal_dual_step(
    model: &mut Model,
    batch: &Batch,
    soft: &SoftExpr,
    m: &mut Multipliers,
    opt: &mut dyn Optimizer,
    reduction: Reduction,
) -> Result<StepLosses, TrainError> {
    let (losses, _) = descent_step(model, batch, opt, reduction, |probs| {
        Ok(Some(pd_term(soft, batch, m, probs, reduction)))
    })?;
    let after = predict(model, batch)?;
    m.ascend_with(&batch.program.constraints, batch.ids.as_deref(), &soft.violations(&after));
    Ok(losses)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub task_loss: f64,
    pub constraint_loss: f64,
    pub violation_rate: f64,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub trace: Vec<EpochTrace>,
    /// Ground constraints skipped over all batches.
    pub skipped: usize,
    pub multipliers: Option<Multipliers>,
    /// Examples processed, summed over epochs.
    pub examples_seen: usize,
    pub ms: f64,
}

impl TrainOutcome {
    pub fn ms_per_example(&self) -> f64 {
        if self.examples_seen == 0 {
            0.0
        } else {
            self.ms / self.examples_seen as f64
        }
    }
}

pub fn write_trace_jsonl<W: Write>(trace: &[EpochTrace], mut w: W) -> std::io::Result<()> {
    for t in trace {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn batch_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul((epoch as u64) << 20 | batch as u64 + 1)
}

/// Trains `model` on shuffled mini-batches of `data` with the configured
/// integration method.
pub fn train(model: &mut Model, data: &dyn BatchSource, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::Config("empty training set".into()));
    }
    let mut opt = make_optimizer(cfg.optimizer, cfg.lr);
    let mut shuffle = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mult = Multipliers::new(cfg.multipliers, cfg.eta_lambda);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut out = TrainOutcome {
        trace: Vec::new(),
        skipped: 0,
        multipliers: None,
        examples_seen: 0,
        ms: 0.0,
    };
    let start = Instant::now();
    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let last_good = model.store.clone();
        order.shuffle(&mut shuffle);
        let (mut task, mut cons, mut viol_num, mut viol_den) = (0.0, 0.0, 0.0, 0usize);
        let mut batches = Vec::new();
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = data.batch(chunk)?;
            out.skipped += batch.skipped;
            let mut rng = ChaCha8Rng::seed_from_u64(batch_seed(cfg.seed, epoch, bi));
            let (losses, probs) = match cfg.method {
                TrainMethod::Pd => {
                    let soft = to_soft_violation(&batch.program, cfg.tnorm)?;
                    let (l, p) = descent_step(model, &batch, opt.as_mut(), cfg.reduction, |probs| {
                        Ok(Some(pd_term(&soft, &batch, &mult, probs, cfg.reduction)))
                    })?;
                    let after = predict(model, &batch)?;
                    mult.ascend_with(&batch.program.constraints, batch.ids.as_deref(), &soft.violations(&after));
                    (l, p)
                }
                TrainMethod::None => descent_step(model, &batch, opt.as_mut(), cfg.reduction, |_| Ok(None))?,
                TrainMethod::SampL | TrainMethod::SemL => {
                    descent_step(model, &batch, opt.as_mut(), cfg.reduction, |probs| {
                        let mut lg = if cfg.method == TrainMethod::SampL {
                            let s = if cfg.exhaustive_samples {
                                Sampling::Exhaustive
                            } else {
                                Sampling::Draw(cfg.n_samples)
                            };
                            sampling_loss(probs, &batch.program, s, cfg.grouping, &mut rng)?
                        } else {
                            semantic_loss_exact(probs, &batch.program, cfg.semantic_cap as u128)?
                        };
                        let scale = cfg.constraint_weight * cfg.reduction.scale(lg.terms);
                        lg.value *= scale;
                        lg.grad.iter_mut().flatten().for_each(|x| *x *= scale);
                        Ok(Some(lg))
                    })?
                }
            };
            if !(losses.task.is_finite() && losses.constraint.is_finite()) {
                model.store = last_good;
                return Err(TrainError::Diverged { epoch });
            }
            let n = batch.program.constraints.len();
            viol_num += argmax_violation(&probs, &batch.program) * n as f64;
            viol_den += n;
            task += losses.task * chunk.len() as f64;
            cons += losses.constraint * chunk.len() as f64;
            out.examples_seen += chunk.len();
            if cfg.stop_when_satisfied {
                batches.push(batch);
            }
        }
        if model.store.params().iter().any(|p| p.value.data.iter().any(|v| !v.is_finite())) {
            model.store = last_good;
            return Err(TrainError::Diverged { epoch });
        }
        out.trace.push(EpochTrace {
            epoch,
            task_loss: task / data.len() as f64,
            constraint_loss: cons / data.len() as f64,
            violation_rate: if viol_den == 0 { 0.0 } else { viol_num / viol_den as f64 },
            ms: t0.elapsed().as_secs_f64() * 1e3,
        });
        if cfg.stop_when_satisfied {
            let mut all = true;
            for b in &batches {
                if argmax_violation(&predict(model, b)?, &b.program) > 0.0 {
                    all = false;
                    break;
                }
            }
            if all {
                break;
            }
        }
    }
    out.ms = start.elapsed().as_secs_f64() * 1e3;
    if cfg.method == TrainMethod::Pd {
        out.multipliers = Some(mult);
    }
    Ok(out)
}
