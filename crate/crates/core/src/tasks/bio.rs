//! BIO sequence tagging. Tags are `O` = 0, `B-t` = 2t + 1, `I-t` = 2t + 2.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{mlp_head, parse_task_program, split3, BindingRow, Example, InputSpec, MetricKind, Readout, TaskError, TaskInstance, VarSpec};
use crate::infer::Transitions;
use crate::lang::BindingValue;

const DIM: usize = 8;
const GEN_TYPES: usize = 4;
const HASH_BUCKETS: usize = 16;

/// `I-t` may only follow `B-t` or `I-t` and never starts a sequence.
pub fn bio_transitions(n_types: usize) -> Transitions {
    let k = 2 * n_types + 1;
    let mut t = Transitions::all(k);
    for ty in 0..n_types {
        let i = 2 * ty + 2;
        for p in 0..k {
            t.allowed[p][i] = p == i - 1 || p == i;
        }
        t.start[i] = false;
    }
    t
}

fn program_text(n_types: usize) -> String {
    format!(
        "domain Tok;
domain Tag = 0..{};
domain Ty = 0..{};
pred tag(Tok, Tag) categorical;
free s in Tok;
constraint start: forall t in Ty: !tag(s, 2 * t + 2);
free i, j in Tok;
constraint transition: forall t in Ty: tag(j, 2 * t + 2) -> (tag(i, 2 * t + 1) | tag(i, 2 * t + 2));
",
        2 * n_types,
        n_types - 1
    )
}

/// Example over one sentence; token rows are `[features(t − 1), features(t)]`.
fn sentence_example(feats: &[Vec<f64>], tags: &[usize]) -> Example {
    let width = feats[0].len();
    let rows = (0..feats.len())
        .map(|t| {
            let mut r = if t == 0 { vec![0.0; width] } else { feats[t - 1].clone() };
            r.extend_from_slice(&feats[t]);
            r
        })
        .collect();
    let int = |i: usize| BindingValue::Int(i as i64);
    let mut bindings = vec![BindingRow::new("start", [("s", int(0))])];
    for t in 1..tags.len() {
        bindings.push(BindingRow::new("transition", [("i", int(t - 1)), ("j", int(t))]));
    }
    Example {
        inputs: vec![rows],
        vars: tags
            .iter()
            .enumerate()
            .map(|(t, &y)| VarSpec {
                pred: "tag".into(),
                args: vec![t as i64],
                head: 0,
                col: 0,
                label: Some(y),
                supervised: true,
            })
            .collect(),
        bindings,
        stratum: None,
    }
}

fn bio_task(name: &str, n_types: usize, width: usize, train: Vec<Example>, dev: Vec<Example>, test: Vec<Example>) -> TaskInstance {
    let text = program_text(n_types);
    let k = 2 * n_types + 1;
    TaskInstance {
        name: name.into(),
        program: parse_task_program(name, &text),
        program_text: text,
        train,
        dev,
        test,
        inputs: vec![InputSpec {
            domain: "Tok".into(),
            width: 2 * width,
        }],
        row_bindings: [("s".to_string(), 0), ("i".to_string(), 0), ("j".to_string(), 0)].into(),
        simple: vec![mlp_head(0, &[2 * width, k])],
        strong: vec![mlp_head(0, &[2 * width, 32, k])],
        metric: MetricKind::MacroF1,
        readouts: vec![Readout::Labels {
            pred: "tag".into(),
            classes: (1..k).collect(),
        }],
        transitions: Some(bio_transitions(n_types)),
        metric_excludes: Vec::new(),
    }
}

/// `n` training sentences of length 4–12 over four entity types, plus dev
/// and test sets of `max(n / 4, 10)`. Token features show the entity type
/// clearly and whether the token begins a span only faintly.
pub fn gen_bio(n: usize, seed: u64) -> TaskInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let emb: Vec<Vec<f64>> = (0..=GEN_TYPES).map(|_| (0..DIM).map(|_| unit.sample(&mut rng)).collect()).collect();
    let held = (n / 4).max(10);
    let examples: Vec<Example> = (0..n + 2 * held)
        .map(|_| {
            let len = rng.random_range(4..=12);
            let mut tags = Vec::with_capacity(len);
            while tags.len() < len {
                if rng.random_bool(0.3) {
                    let ty = rng.random_range(0..GEN_TYPES);
                    let span = rng.random_range(1..=3).min(len - tags.len());
                    tags.push(2 * ty + 1);
                    tags.extend(std::iter::repeat_n(2 * ty + 2, span - 1));
                } else {
                    tags.push(0);
                }
            }
            let feats: Vec<Vec<f64>> = tags
                .iter()
                .map(|&y| {
                    let class = if y == 0 { 0 } else { (y - 1) / 2 + 1 };
                    let mut f: Vec<f64> = emb[class].iter().map(|x| x + 0.8 * unit.sample(&mut rng)).collect();
                    f.push((y % 2 == 1) as u8 as f64 + 0.8 * unit.sample(&mut rng));
                    f
                })
                .collect();
            sentence_example(&feats, &tags)
        })
        .collect();
    let (train, dev, test) = split3(examples, n, held);
    bio_task("bio", GEN_TYPES, DIM + 1, train, dev, test)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

/// Sentences of CoNLL column text: token first, tag last, blank lines
/// between sentences, `-DOCSTART-` lines ignored.
pub fn parse_conll(text: &str, path: &str) -> Result<Vec<BioSentence>, TaskError> {
    let mut out = Vec::new();
    let mut cur = BioSentence {
        tokens: Vec::new(),
        tags: Vec::new(),
    };
    let mut columns = None;
    for (i, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            if !cur.tokens.is_empty() {
                out.push(std::mem::replace(
                    &mut cur,
                    BioSentence {
                        tokens: Vec::new(),
                        tags: Vec::new(),
                    },
                ));
            }
            continue;
        }
        if cols[0] == "-DOCSTART-" {
            continue;
        }
        let bad = |message: String| TaskError::Line {
            path: path.into(),
            line: i + 1,
            message,
        };
        if cols.len() < 2 {
            return Err(bad(format!("expected token and tag columns, found {}", cols.len())));
        }
        match columns {
            None => columns = Some(cols.len()),
            Some(n) if n != cols.len() => return Err(bad(format!("expected {n} columns, found {}", cols.len()))),
            _ => {}
        }
        let tag = cols[cols.len() - 1];
        if tag != "O" && !(tag.len() > 2 && (tag.starts_with("B-") || tag.starts_with("I-"))) {
            return Err(bad(format!("malformed tag `{tag}`")));
        }
        cur.tokens.push(cols[0].to_string());
        cur.tags.push(tag.to_string());
    }
    if !cur.tokens.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn token_features(tok: &str) -> Vec<f64> {
    let mut f = vec![0.0; HASH_BUCKETS + 3];
    f[(fnv1a(&tok.to_lowercase()) % HASH_BUCKETS as u64) as usize] = 1.0;
    f[HASH_BUCKETS] = tok.chars().next().is_some_and(char::is_uppercase) as u8 as f64;
    f[HASH_BUCKETS + 1] = tok.chars().all(|c| !c.is_alphabetic() || c.is_uppercase()) as u8 as f64;
    f[HASH_BUCKETS + 2] = tok.chars().any(|c| c.is_ascii_digit()) as u8 as f64;
    f
}

/// CoNLL file as a BIO task with hashed token features, split 80/10/10.
/// An `I-t` that cannot continue a span is read as `B-t`.
pub fn load_conll(path: &str) -> Result<TaskInstance, TaskError> {
    let text = std::fs::read_to_string(path).map_err(|source| TaskError::Io {
        path: path.into(),
        source,
    })?;
    let sentences = parse_conll(&text, path)?;
    if sentences.len() < 3 {
        return Err(TaskError::Format {
            path: path.into(),
            message: format!("{} sentences, need at least 3", sentences.len()),
        });
    }
    let mut types: Vec<String> = Vec::new();
    for s in &sentences {
        for t in &s.tags {
            if t != "O" && !types.contains(&t[2..].to_string()) {
                types.push(t[2..].to_string());
            }
        }
    }
    if types.is_empty() {
        types.push("MISC".into());
    }
    let examples: Vec<Example> = sentences
        .iter()
        .map(|s| {
            let mut ids: Vec<usize> = Vec::with_capacity(s.tags.len());
            for t in &s.tags {
                let id = if t == "O" {
                    0
                } else {
                    let ty = types.iter().position(|x| *x == t[2..]).expect("collected above");
                    let cont = ids.last().is_some_and(|&p| p == 2 * ty + 1 || p == 2 * ty + 2);
                    if t.starts_with("I-") && cont {
                        2 * ty + 2
                    } else {
                        2 * ty + 1
                    }
                };
                ids.push(id);
            }
            let feats: Vec<Vec<f64>> = s.tokens.iter().map(|t| token_features(t)).collect();
            sentence_example(&feats, &ids)
        })
        .collect();
    let n_train = examples.len() * 8 / 10;
    let n_dev = (examples.len() - n_train) / 2;
    let (train, dev, test) = split3(examples, n_train, n_dev);
    Ok(bio_task("conll", types.len(), HASH_BUCKETS + 3, train, dev, test))
}
