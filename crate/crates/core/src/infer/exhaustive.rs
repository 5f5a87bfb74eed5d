use std::time::Instant;

use super::{InferError, MapSolution, PredictionTable, SolverStats};
use crate::lang::GroundProgram;

pub const DEFAULT_SPACE_CAP: u128 = 1_000_000;

pub fn exhaustive_map(probs: &PredictionTable, g: &GroundProgram) -> Result<MapSolution, InferError> {
    exhaustive_map_with_cap(probs, g, DEFAULT_SPACE_CAP)
}

/// Enumerates assignments in lexicographic order (first variable most
/// significant) and keeps the first one with the highest score.
pub fn exhaustive_map_with_cap(probs: &PredictionTable, g: &GroundProgram, cap: u128) -> Result<MapSolution, InferError> {
    if probs.len() != g.vars.len() || g.vars.iter().enumerate().any(|(v, d)| d.n_labels() != probs.n_labels(v)) {
        return Err(InferError::Mismatch("probabilities do not match the program's variables".into()));
    }
    let size = g.space_size();
    if size > cap {
        return Err(InferError::SpaceTooLarge { size, cap });
    }
    let start = Instant::now();
    let n_labels = g.n_labels();
    let mut a = vec![0usize; n_labels.len()];
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut nodes = 0u64;
    loop {
        nodes += 1;
        if g.constraints.iter().all(|c| c.formula.eval(&a)) {
            let s = probs.score(&a);
            if best.as_ref().is_none_or(|(_, b)| s > *b) {
                best = Some((a.clone(), s));
            }
        }
        let mut i = a.len();
        loop {
            if i == 0 {
                let ms = start.elapsed().as_secs_f64() * 1e3;
                return match best {
                    Some((assignment, objective)) => Ok(MapSolution {
                        assignment,
                        objective,
                        stats: SolverStats { nodes, ms, optimal: true },
                    }),
                    None => Err(InferError::Infeasible { nodes }),
                };
            }
            i -= 1;
            a[i] += 1;
            if a[i] < n_labels[i] {
                break;
            }
            a[i] = 0;
        }
    }
}
