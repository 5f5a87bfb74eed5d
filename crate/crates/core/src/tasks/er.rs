//! Entity mentions and directed relations with argument-type constraints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{mlp_head, parse_task_program, split3, BindingRow, Example, InputSpec, MetricKind, Readout, TaskInstance, VarSpec};
use crate::lang::BindingValue;

pub const ENTITY_TYPES: [&str; 4] = ["person", "org", "location", "other"];
pub const RELATION_TYPES: [&str; 5] = ["live_in", "orgbased_in", "work_for", "kill", "located_in"];
/// Argument types (as entity indices) of each relation.
pub const RELATION_TYPING: [(usize, usize); 5] = [(0, 2), (1, 2), (0, 1), (0, 0), (2, 2)];

const MENTIONS: usize = 3;
const DIM: usize = 8;

const PROGRAM: &str = "domain M;
domain Pr;
domain T = {person, org, location, other};
domain R = {live_in, orgbased_in, work_for, kill, located_in};
pred ent(M, T);
pred rel(Pr, R);
constraint one_type: forall m in M: exactly(1){ent(m, t) for t in T};
constraint one_relation: forall p in Pr: atmost(1){rel(p, r) for r in R};
free p in Pr;
free a, b in M;
constraint live_in: rel(p, live_in) -> (ent(a, person) & ent(b, location));
constraint orgbased_in: rel(p, orgbased_in) -> (ent(a, org) & ent(b, location));
constraint work_for: rel(p, work_for) -> (ent(a, person) & ent(b, org));
constraint kill: rel(p, kill) -> (ent(a, person) & ent(b, person));
constraint located_in: rel(p, located_in) -> (ent(a, location) & ent(b, location));
";

/// `n` sentences of three mentions and their six ordered pairs, plus dev
/// and test sets of `max(n / 4, 10)`. Mention features are weak evidence
/// of type; pair features carry the relation more clearly.
pub fn gen_entity_relation(n: usize, seed: u64) -> TaskInstance {
    assert!(n >= 10, "entity-relation needs at least 10 sentences");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let emb = |k: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..k).map(|_| (0..DIM).map(|_| unit.sample(rng)).collect()).collect()
    };
    let type_emb = emb(ENTITY_TYPES.len(), &mut rng);
    let rel_emb = emb(RELATION_TYPES.len(), &mut rng);
    let held = (n / 4).max(10);
    let pairs: Vec<(usize, usize)> = (0..MENTIONS)
        .flat_map(|a| (0..MENTIONS).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    let examples: Vec<Example> = (0..n + 2 * held)
        .map(|_| {
            let types: Vec<usize> = (0..MENTIONS).map(|_| rng.random_range(0..ENTITY_TYPES.len())).collect();
            let rels: Vec<Option<usize>> = pairs
                .iter()
                .map(|&(a, b)| {
                    let fits: Vec<usize> = (0..RELATION_TYPES.len())
                        .filter(|&r| RELATION_TYPING[r] == (types[a], types[b]))
                        .collect();
                    (!fits.is_empty() && rng.random_bool(0.6)).then(|| fits[rng.random_range(0..fits.len())])
                })
                .collect();
            let mentions: Vec<Vec<f64>> = types
                .iter()
                .map(|&t| type_emb[t].iter().map(|x| x + 1.2 * unit.sample(&mut rng)).collect())
                .collect();
            let pair_rows: Vec<Vec<f64>> = pairs
                .iter()
                .zip(&rels)
                .map(|(&(a, b), r)| {
                    let mut v = mentions[a].clone();
                    v.extend_from_slice(&mentions[b]);
                    v.extend((0..DIM).map(|k| r.map_or(0.0, |r| rel_emb[r][k]) + 0.5 * unit.sample(&mut rng)));
                    v
                })
                .collect();
            let mut vars = Vec::new();
            for (m, &t) in types.iter().enumerate() {
                for k in 0..ENTITY_TYPES.len() {
                    vars.push(VarSpec {
                        pred: "ent".into(),
                        args: vec![m as i64, k as i64],
                        head: 0,
                        col: 2 * k,
                        label: Some((k == t) as usize),
                        supervised: true,
                    });
                }
            }
            for (p, r) in rels.iter().enumerate() {
                for k in 0..RELATION_TYPES.len() {
                    vars.push(VarSpec {
                        pred: "rel".into(),
                        args: vec![p as i64, k as i64],
                        head: 1,
                        col: 2 * k,
                        label: Some((*r == Some(k)) as usize),
                        supervised: true,
                    });
                }
            }
            let int = |i: usize| BindingValue::Int(i as i64);
            let mut bindings = Vec::new();
            for name in RELATION_TYPES {
                for (p, &(a, b)) in pairs.iter().enumerate() {
                    bindings.push(BindingRow::new(name, [("p", int(p)), ("a", int(a)), ("b", int(b))]));
                }
            }
            Example {
                inputs: vec![mentions, pair_rows],
                vars,
                bindings,
                stratum: Some(types[0]),
            }
        })
        .collect();
    let (train, dev, test) = split3(examples, n, held);
    TaskInstance {
        name: "entity_relation".into(),
        program_text: PROGRAM.into(),
        program: parse_task_program("entity_relation", PROGRAM),
        train,
        dev,
        test,
        inputs: vec![
            InputSpec {
                domain: "M".into(),
                width: DIM,
            },
            InputSpec {
                domain: "Pr".into(),
                width: 3 * DIM,
            },
        ],
        row_bindings: [("p".to_string(), 1), ("a".to_string(), 0), ("b".to_string(), 0)].into(),
        simple: vec![mlp_head(0, &[DIM, 8]), mlp_head(1, &[3 * DIM, 10])],
        strong: vec![mlp_head(0, &[DIM, 32, 8]), mlp_head(1, &[3 * DIM, 32, 10])],
        metric: MetricKind::MacroF1,
        readouts: vec![
            Readout::OneHot {
                pred: "ent".into(),
                n_classes: ENTITY_TYPES.len(),
            },
            Readout::OneHot {
                pred: "rel".into(),
                n_classes: RELATION_TYPES.len(),
            },
        ],
        transitions: None,
        metric_excludes: Vec::new(),
    }
}
