//! Inference-time constraint integration: exact MAP over a linear system,
//! constrained sequence decoding, and an exhaustive oracle.

mod exhaustive;
mod ilp;
mod sequence;
mod table;

pub use exhaustive::{exhaustive_map, exhaustive_map_with_cap, DEFAULT_SPACE_CAP};
pub use ilp::{ilp_map, ilp_map_with, IlpOptions, DEFAULT_TIMEOUT};
pub use sequence::{astar_decode, sequence_program, viterbi_decode, Transitions};
pub use table::{read_probs_csv, PredictionTable, PROB_FLOOR};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferError {
    #[error("no feasible assignment (after {nodes} nodes)")]
    Infeasible { nodes: u64 },
    #[error("timed out after {ms} ms without a feasible assignment")]
    Timeout { ms: u64 },
    #[error("assignment space of {size} exceeds the cap of {cap}")]
    SpaceTooLarge { size: u128, cap: u128 },
    #[error("{0}")]
    Mismatch(String),
    #[error("probabilities file line {line}: {message}")]
    Csv { line: usize, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub nodes: u64,
    pub ms: f64,
    /// No feasible assignment scores higher.
    pub optimal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSolution {
    /// Label index per decision variable.
    pub assignment: Vec<usize>,
    /// Σ log p(v, assignment[v]).
    pub objective: f64,
    pub stats: SolverStats,
}

/// How predictions become an assignment at test time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InferMethod {
    /// Independent per-variable argmax.
    #[default]
    None,
    Ilp,
    Viterbi,
    AStar,
    Exhaustive,
}

impl InferMethod {
    pub fn name(self) -> &'static str {
        match self {
            InferMethod::None => "none",
            InferMethod::Ilp => "ilp",
            InferMethod::Viterbi => "viterbi",
            InferMethod::AStar => "astar",
            InferMethod::Exhaustive => "exhaustive",
        }
    }

    /// Row of the capability matrix that gates this method.
    pub fn capability(self) -> Option<crate::compile::Method> {
        use crate::compile::Method;
        match self {
            InferMethod::None => None,
            InferMethod::Ilp | InferMethod::Exhaustive => Some(Method::Ilp),
            InferMethod::Viterbi => Some(Method::Viterbi),
            InferMethod::AStar => Some(Method::AStar),
        }
    }
}

/// Decodes `probs` for the variables of `g` with `method`. Sequence
/// decoders need the label mask of the sequence.
pub fn decode(
    method: InferMethod,
    probs: &PredictionTable,
    g: &crate::lang::GroundProgram,
    transitions: Option<&Transitions>,
    opts: &IlpOptions,
) -> Result<MapSolution, InferError> {
    let need_mask = || transitions.ok_or_else(|| InferError::Mismatch(format!("{} needs a sequence label mask", method.name())));
    match method {
        InferMethod::None => {
            let assignment = probs.argmax();
            Ok(MapSolution {
                objective: probs.score(&assignment),
                assignment,
                stats: SolverStats {
                    nodes: 0,
                    ms: 0.0,
                    optimal: g.constraints.is_empty(),
                },
            })
        }
        InferMethod::Ilp => ilp_map_with(probs, &crate::compile::linearize(g), opts),
        InferMethod::Viterbi => viterbi_decode(probs, need_mask()?),
        InferMethod::AStar => astar_decode(probs, need_mask()?),
        InferMethod::Exhaustive => exhaustive_map(probs, g),
    }
}
