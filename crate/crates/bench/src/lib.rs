//! Shared fixtures for benchmarks.

use ncl_core::infer::{PredictionTable, Transitions};
use ncl_core::lang::GroundProgram;
use ncl_core::random::random_distribution;
use ncl_core::tasks::{bio_transitions, generate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Ground program of the first test example of a generated task.
pub fn task_program(name: &str) -> GroundProgram {
    let task = generate(name, 0).expect("known task");
    task.ground_example(&task.test[0]).expect("example grounds")
}

/// Random per-variable distributions, floored away from zero.
pub fn random_probs(g: &GroundProgram, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    g.vars.iter().map(|v| random_distribution(&mut rng, v.n_labels(), 0.01)).collect()
}

pub fn random_table(g: &GroundProgram, seed: u64) -> PredictionTable {
    PredictionTable::new(random_probs(g, seed)).expect("rows are distributions")
}

/// BIO transitions over `types` entity types with a random table of `len` tokens.
pub fn bio_sequence(types: usize, len: usize, seed: u64) -> (Transitions, PredictionTable) {
    let t = bio_transitions(types);
    let k = t.start.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..len).map(|_| random_distribution(&mut rng, k, 0.01)).collect();
    (t, PredictionTable::new(rows).expect("rows are distributions"))
}
