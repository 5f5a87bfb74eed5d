use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ncl_bench::{bio_sequence, random_probs, random_table, task_program};
use ncl_core::compile::{linearize, to_soft_violation, TNorm};
use ncl_core::infer::{astar_decode, exhaustive_map, ilp_map, viterbi_decode};
use ncl_core::train::{sampling_loss, semantic_loss_exact, Grouping, Sampling, DEFAULT_SEMANTIC_CAP};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ilp(c: &mut Criterion) {
    let mut group = c.benchmark_group("ilp");
    for name in ["digit_exclusive", "hierarchy", "entity_relation", "sudoku6", "sudoku9"] {
        let g = task_program(name);
        let ls = linearize(&g);
        let p = random_table(&g, 1);
        group.bench_function(name, |b| b.iter(|| ilp_map(black_box(&p), &ls).unwrap()));
    }
    let g = task_program("digit_exclusive");
    let p = random_table(&g, 1);
    group.bench_function("digit_exclusive/exhaustive", |b| b.iter(|| exhaustive_map(black_box(&p), &g).unwrap()));
    group.finish();
}

fn sequence(c: &mut Criterion) {
    let mut group = c.benchmark_group("sequence");
    for len in [10, 40] {
        let (t, p) = bio_sequence(4, len, 2);
        group.bench_function(format!("viterbi/{len}"), |b| b.iter(|| viterbi_decode(black_box(&p), &t).unwrap()));
        group.bench_function(format!("astar/{len}"), |b| b.iter(|| astar_decode(black_box(&p), &t).unwrap()));
    }
    group.finish();
}

fn losses(c: &mut Criterion) {
    let mut group = c.benchmark_group("losses");
    let g = task_program("digit_sum");
    let p = random_probs(&g, 3);
    group.bench_function("seml/digit_sum", |b| {
        b.iter(|| semantic_loss_exact(black_box(&p), &g, DEFAULT_SEMANTIC_CAP).unwrap())
    });
    group.bench_function("sampl/digit_sum", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        b.iter(|| sampling_loss(black_box(&p), &g, Sampling::Exhaustive, Grouping::Component, &mut rng).unwrap())
    });
    let g = task_program("sudoku9");
    let p = random_probs(&g, 3);
    group.bench_function("sampl/sudoku9", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        b.iter(|| sampling_loss(black_box(&p), &g, Sampling::Draw(100), Grouping::PerConstraint, &mut rng).unwrap())
    });
    let soft = to_soft_violation(&g, TNorm::Product).unwrap();
    let w = vec![1.0; g.constraints.len()];
    group.bench_function("pd/sudoku9", |b| b.iter(|| soft.violation_grad(black_box(&p), &w)));
    group.finish();
}

criterion_group!(benches, ilp, sequence, losses);
criterion_main!(benches);
