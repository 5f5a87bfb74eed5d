//! 8×8 digit glyphs: per-class exclusivity and sum-only supervision.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::idx::{read_idx_images, read_idx_labels};
use super::{mlp_head, parse_task_program, split3, BindingRow, Example, InputSpec, MetricKind, Readout, TaskError, TaskInstance, VarSpec};
use crate::lang::BindingValue;

/// Pixel noise of the generated glyphs.
pub const DIGIT_NOISE: f64 = 0.2;

const GLYPHS: [[&str; 8]; 10] = [
    ["..####..", ".#....#.", ".#....#.", ".#....#.", ".#....#.", ".#....#.", ".#....#.", "..####.."],
    ["...##...", "..###...", "...##...", "...##...", "...##...", "...##...", "...##...", "..####.."],
    ["..####..", ".#....#.", "......#.", ".....#..", "....#...", "...#....", "..#.....", ".######."],
    ["..####..", ".#....#.", "......#.", "...###..", "......#.", "......#.", ".#....#.", "..####.."],
    ["....##..", "...#.#..", "..#..#..", ".#...#..", ".######.", ".....#..", ".....#..", ".....#.."],
    [".######.", ".#......", ".#......", ".#####..", "......#.", "......#.", ".#....#.", "..####.."],
    ["..####..", ".#......", ".#......", ".#####..", ".#....#.", ".#....#.", ".#....#.", "..####.."],
    [".######.", "......#.", ".....#..", "....#...", "...#....", "...#....", "...#....", "...#...."],
    ["..####..", ".#....#.", ".#....#.", "..####..", ".#....#.", ".#....#.", ".#....#.", "..####.."],
    ["..####..", ".#....#.", ".#....#.", ".#....#.", "..#####.", "......#.", "......#.", "..####.."],
];

/// Noiseless 64-pixel template of `digit`.
pub fn glyph(digit: usize) -> Vec<f64> {
    GLYPHS[digit]
        .iter()
        .flat_map(|row| row.bytes().map(|b| (b == b'#') as u8 as f64))
        .collect()
}

fn noisy_glyph<R: Rng>(rng: &mut R, digit: usize, sigma: f64) -> Vec<f64> {
    let mut g = glyph(digit);
    if sigma > 0.0 {
        let n = Normal::new(0.0, sigma).expect("positive sigma");
        g.iter_mut().for_each(|x| *x += n.sample(rng));
    }
    g
}

fn balanced_labels<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut y: Vec<usize> = (0..n).map(|i| i % 10).collect();
    y.shuffle(rng);
    y
}

const EXCLUSIVE: &str = "domain Img;
domain Digit = 0..9;
pred digit(Img, Digit);
constraint exclusive: forall i in Img: exactly(1){digit(i, d) for d in Digit};
";

pub fn gen_digit_exclusive(n: usize, seed: u64) -> TaskInstance {
    gen_digit_exclusive_with(n, seed, DIGIT_NOISE)
}

/// `n` training images plus dev and test sets of `max(n / 5, 10)`, one
/// boolean classifier per digit.
pub fn gen_digit_exclusive_with(n: usize, seed: u64, sigma: f64) -> TaskInstance {
    assert!(n >= 10, "digit exclusivity needs at least 10 examples");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let held = (n / 5).max(10);
    let mut examples = Vec::with_capacity(n + 2 * held);
    for size in [n, held, held] {
        for y in balanced_labels(&mut rng, size) {
            examples.push(Example {
                inputs: vec![vec![noisy_glyph(&mut rng, y, sigma)]],
                vars: (0..10)
                    .map(|d| VarSpec {
                        pred: "digit".into(),
                        args: vec![0, d as i64],
                        head: d,
                        col: 0,
                        label: Some((d == y) as usize),
                        supervised: true,
                    })
                    .collect(),
                bindings: Vec::new(),
                stratum: Some(y),
            });
        }
    }
    let (train, dev, test) = split3(examples, n, held);
    TaskInstance {
        name: "digit_exclusive".into(),
        program_text: EXCLUSIVE.into(),
        program: parse_task_program("digit_exclusive", EXCLUSIVE),
        train,
        dev,
        test,
        inputs: vec![InputSpec {
            domain: "Img".into(),
            width: 64,
        }],
        row_bindings: BTreeMap::new(),
        simple: (0..10).map(|_| mlp_head(0, &[64, 2])).collect(),
        strong: (0..10).map(|_| mlp_head(0, &[64, 16, 2])).collect(),
        metric: MetricKind::MacroF1,
        readouts: vec![Readout::OneHot {
            pred: "digit".into(),
            n_classes: 10,
        }],
        transitions: None,
        metric_excludes: Vec::new(),
    }
}

const SUM: &str = "domain Img;
domain D = 0..9;
domain S = 0..18;
pred digit(Img, D) categorical;
free a, b in Img;
free s in S;
constraint sum: exists m in D where m <= s & s - m <= 9: digit(a, m) & digit(b, s - m);
";

/// `P(S = s) = Σ_k P(D1 = k) P(D2 = s − k)` for `s` in `0..=18`.
pub fn sum_distribution(p1: &[f64], p2: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p1.len() + p2.len() - 1];
    for (i, a) in p1.iter().enumerate() {
        for (j, b) in p2.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

fn pair_example(a: Vec<f64>, b: Vec<f64>, da: usize, db: usize) -> Example {
    let s = (da + db) as i64;
    Example {
        inputs: vec![vec![a, b]],
        vars: [da, db]
            .iter()
            .enumerate()
            .map(|(i, &d)| VarSpec {
                pred: "digit".into(),
                args: vec![i as i64],
                head: 0,
                col: 0,
                label: Some(d),
                supervised: false,
            })
            .collect(),
        bindings: vec![BindingRow::new(
            "sum",
            [("a", BindingValue::Int(0)), ("b", BindingValue::Int(1)), ("s", BindingValue::Int(s))],
        )],
        stratum: Some(s as usize),
    }
}

fn sum_task(train: Vec<Example>, dev: Vec<Example>, test: Vec<Example>, width: usize) -> TaskInstance {
    TaskInstance {
        name: "digit_sum".into(),
        program_text: SUM.into(),
        program: parse_task_program("digit_sum", SUM),
        train,
        dev,
        test,
        inputs: vec![InputSpec {
            domain: "Img".into(),
            width,
        }],
        row_bindings: [("a".to_string(), 0), ("b".to_string(), 0)].into(),
        simple: vec![mlp_head(0, &[width, 10])],
        strong: vec![mlp_head(0, &[width, 32, 10])],
        metric: MetricKind::Accuracy,
        readouts: vec![Readout::Labels {
            pred: "digit".into(),
            classes: (0..10).collect(),
        }],
        transitions: None,
        metric_excludes: Vec::new(),
    }
}

/// `n_pairs` training pairs labeled only by their digit sum, plus dev and
/// test sets of `max(n_pairs / 5, 10)` pairs.
pub fn gen_digit_sum(n_pairs: usize, seed: u64) -> TaskInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let held = (n_pairs / 5).max(10);
    let examples: Vec<Example> = (0..n_pairs + 2 * held)
        .map(|_| {
            let (da, db) = (rng.random_range(0..10), rng.random_range(0..10));
            let a = noisy_glyph(&mut rng, da, DIGIT_NOISE);
            let b = noisy_glyph(&mut rng, db, DIGIT_NOISE);
            pair_example(a, b, da, db)
        })
        .collect();
    let (train, dev, test) = split3(examples, n_pairs, held);
    sum_task(train, dev, test, 64)
}

/// Digit-sum pairs from consecutive IDX images, split 80/10/10.
pub fn load_mnist_idx(images_path: &str, labels_path: &str) -> Result<TaskInstance, TaskError> {
    let read = |p: &str| {
        std::fs::read(p).map_err(|source| TaskError::Io {
            path: p.into(),
            source,
        })
    };
    let fmt = |p: &str| {
        let p = p.to_string();
        move |message| TaskError::Format { path: p, message }
    };
    let images = read_idx_images(&read(images_path)?).map_err(fmt(images_path))?;
    let labels = read_idx_labels(&read(labels_path)?).map_err(fmt(labels_path))?;
    if labels.len() != images.n {
        return Err(TaskError::Format {
            path: labels_path.into(),
            message: format!("{} labels for {} images", labels.len(), images.n),
        });
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 9) {
        return Err(TaskError::Format {
            path: labels_path.into(),
            message: format!("label {bad} is not a digit"),
        });
    }
    let scale = |i: usize| images.image(i).iter().map(|&p| p as f64 / 255.0).collect::<Vec<f64>>();
    let pairs: Vec<Example> = (0..images.n / 2)
        .map(|k| pair_example(scale(2 * k), scale(2 * k + 1), labels[2 * k] as usize, labels[2 * k + 1] as usize))
        .collect();
    if pairs.len() < 10 {
        return Err(TaskError::Invalid(format!("{images_path}: need at least 20 images")));
    }
    let n_train = pairs.len() * 8 / 10;
    let n_dev = pairs.len() / 10;
    let (train, dev, test) = split3(pairs, n_train, n_dev);
    Ok(sum_task(train, dev, test, images.rows * images.cols))
}
