use std::path::{Path, PathBuf};
use std::process::Command;

use ncl_cli::*;
use ncl_core::infer::InferMethod;
use ncl_core::train::TrainMethod;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs_dir().join(format!("{name}.toml"))).unwrap()
}

fn tiny(task: &str, train: TrainMethod, infer: InferMethod, out: &Path) -> ExperimentConfig {
    let mut cfg = load(task);
    cfg.method.train = train;
    cfg.method.infer = infer;
    cfg.train.epochs = 2;
    cfg.run.seeds = vec![0, 1];
    cfg.run.out = out.to_path_buf();
    cfg
}

#[test]
fn committed_configs_validate() {
    let mut n = 0;
    for e in std::fs::read_dir(configs_dir()).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            let cfg = ExperimentConfig::load(&p).unwrap();
            validate(&cfg).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert_eq!(n, ncl_core::tasks::TASK_NAMES.len());
}

#[test]
fn config_errors_are_reported() {
    let bad = |text: &str| matches!(ExperimentConfig::parse(text), Err(CliError::Config(_)));
    assert!(bad("[task]\nid = \"bio\"\nextra = 1\n"));
    assert!(bad("[task]\nid = \"bio\"\n[run]\ndata_fraction = 0.0\n"));
    assert!(bad("[task]\nid = \"bio\"\n[run]\nseeds = []\n"));
    assert!(bad("[task]\nid = \"bio\"\n[method]\ntrain = \"pd\"\n[train]\nmethod = \"sampl\"\n"));
    assert!(bad("[task]\nid = \"bio\"\n[train]\nlr = -1.0\n"));
    assert!(bad("[task]\nid = \"bio\"\n[method]\ninfer = \"beam\"\n"));
    assert!(bad("[task]\nid = \"sudoku9\"\n[task.source]\nkind = \"conll\"\npath = \"x\"\n"));
    let cfg = ExperimentConfig::parse("[task]\nid = \"nope\"\n").unwrap();
    assert!(matches!(validate(&cfg), Err(CliError::Config(_))));
    let cfg = ExperimentConfig::parse("[task]\nid = \"bio\"\n[task.source]\nkind = \"conll\"\npath = \"/no/such/file\"\n").unwrap();
    assert!(matches!(validate(&cfg), Err(CliError::Config(_))));
}

#[test]
fn overrides_replace_seeds_and_out() {
    let mut cfg = load("bio");
    cfg.apply(&Overrides {
        seed: Some(7),
        out: Some("elsewhere".into()),
        timeout_ms: Some(5),
        jobs: Some(3),
    });
    assert_eq!(cfg.run.seeds, vec![7]);
    assert_eq!(cfg.run.out, PathBuf::from("elsewhere"));
    assert_eq!((cfg.run.timeout_ms, cfg.run.jobs), (5, 3));
}

#[test]
fn capability_gate_names_the_cell() {
    let mut cfg = load("digit_exclusive");
    cfg.method.infer = InferMethod::AStar;
    let Err(CliError::Config(m)) = validate(&cfg) else { panic!("accepted A* on a non-sequence task") };
    assert!(m.contains("capability_matrix[astar]"), "{m}");
    let mut cfg = load("entity_relation");
    cfg.method.infer = InferMethod::Viterbi;
    let Err(CliError::Config(m)) = validate(&cfg) else { panic!("accepted Viterbi on logical constraints") };
    assert!(m.contains("capability_matrix[viterbi][logical]"), "{m}");
    let mut cfg = load("sudoku6");
    cfg.method.train = TrainMethod::SemL;
    assert!(matches!(validate(&cfg), Err(CliError::Config(_))));
}

#[test]
fn every_comparison_cell_is_expressible() {
    let cells = [
        (TrainMethod::None, InferMethod::None),
        (TrainMethod::Pd, InferMethod::None),
        (TrainMethod::SampL, InferMethod::None),
        (TrainMethod::None, InferMethod::Ilp),
        (TrainMethod::Pd, InferMethod::Ilp),
        (TrainMethod::SampL, InferMethod::Ilp),
    ];
    for task in ncl_core::tasks::TASK_NAMES {
        for (t, i) in cells {
            let mut cfg = load(task);
            cfg.method.train = t;
            cfg.method.infer = i;
            validate(&cfg).unwrap_or_else(|e| panic!("{task} {t:?}+{i:?}: {e}"));
        }
    }
    let mut cfg = load("bio");
    for i in [InferMethod::AStar, InferMethod::Viterbi] {
        cfg.method.infer = i;
        validate(&cfg).unwrap();
    }
}

#[test]
fn reruns_give_identical_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let a = tiny("entity_relation", TrainMethod::Pd, InferMethod::Ilp, &dir.path().join("a"));
    let mut b = a.clone();
    b.run.out = dir.path().join("b");
    b.run.jobs = 2;
    run_experiment(&a).unwrap();
    run_experiment(&b).unwrap();
    let ja = std::fs::read(dir.path().join("a/report.json")).unwrap();
    let jb = std::fs::read(dir.path().join("b/report.json")).unwrap();
    assert_eq!(ja, jb);
    assert!(dir.path().join("a/report.txt").exists());
    assert!(dir.path().join("a/traces/entity_relation_pd-ilp_strong_100_seed1.jsonl").exists());
}

#[test]
fn report_merges_runs_with_baseline_delta() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&tiny("hierarchy", TrainMethod::None, InferMethod::None, dir.path())).unwrap();
    run_experiment(&tiny("hierarchy", TrainMethod::None, InferMethod::Ilp, dir.path())).unwrap();
    let r = merge_runs(&[dir.path().to_path_buf()]).unwrap();
    assert_eq!(r.rows.len(), 4);
    assert!(r.rows.iter().all(|x| x.delta.is_some()));
    let base: Vec<_> = r.rows.iter().filter(|x| x.method == "none").collect();
    assert!(base.iter().all(|x| x.delta == Some(0.0)));
    let ilp = r.summary.iter().find(|s| s.method == "ilp").unwrap();
    assert_eq!(ilp.violation_rate, 0.0);
}

#[test]
fn seed_run_records_timings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny("digit_exclusive", TrainMethod::None, InferMethod::Ilp, dir.path());
    let run = run_seed(&cfg, 0).unwrap();
    assert!(run.record.train_ms_per_example > 0.0);
    assert!(run.record.infer_ms_per_example > 0.0);
    assert_eq!(run.record.fingerprint.len(), 64);
    assert_eq!(run.trace.len(), 2);
}

fn ncl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ncl")).args(args).output().unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(ncl(&["validate", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[task]\nid = \"digit_exclusive\"\n[method]\ninfer = \"astar\"\n").unwrap();
    let out = ncl(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("capability_matrix"));

    let good = dir.path().join("good.toml");
    std::fs::write(&good, "[task]\nid = \"sudoku6\"\n[method]\ninfer = \"ilp\"\n[train]\nepochs = 0\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = ncl(&["run", "--config", good.to_str().unwrap(), "--seed", "3", "--out", out_dir.to_str().unwrap(), "--timeout-ms", "20000", "--jobs", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("100.00"));
    assert!(out_dir.join("report.json").exists());

    let g = ncl(&["ground", "--config", good.to_str().unwrap()]);
    assert_eq!(g.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&g.stdout).starts_with("variables 36"));
    let lp = ncl(&["compile", "--config", good.to_str().unwrap()]);
    assert_eq!(lp.status.code(), Some(0));
    assert!(!lp.stdout.is_empty());

    let merged = dir.path().join("merged");
    let r = ncl(&["report", out_dir.to_str().unwrap(), "--out", merged.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    assert_eq!(
        std::fs::read(merged.join("report.json")).unwrap(),
        std::fs::read(out_dir.join("report.json")).unwrap()
    );
}

#[test]
fn solve_reads_lp_and_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let p = ncl_core::lang::parse_program("domain L = {a, b, c}; pred y(L); atmost(1){y(l) for l in L}; y(a) | y(c);").unwrap();
    let g = ncl_core::lang::ground_program(&p, &ncl_core::lang::Instance::default()).unwrap();
    let lp = dir.path().join("m.lp");
    std::fs::write(&lp, ncl_core::compile::write_lp(&ncl_core::compile::linearize(&g))).unwrap();
    let csv = dir.path().join("p.csv");
    std::fs::write(&csv, "variable,label,prob\ny(a),false,0.4\ny(a),true,0.6\ny(b),false,0.1\ny(b),true,0.9\ny(c),false,0.3\ny(c),true,0.7\n").unwrap();
    let out = ncl(&["solve", "--lp", lp.to_str().unwrap(), "--probs", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = String::from_utf8_lossy(&out.stdout);
    assert!(s.contains("optimal true"));
    assert!(s.contains("y(c) true"), "{s}");
    std::fs::write(&csv, "y(a),true,0.6\n").unwrap();
    assert_eq!(ncl(&["solve", "--lp", lp.to_str().unwrap(), "--probs", csv.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn schema_matches_config_fields() {
    let text = std::fs::read_to_string(configs_dir().join("schema.json")).unwrap();
    let schema: serde_json::Value = serde_json::from_str(&text).unwrap();
    let cfg = serde_json::to_value(ExperimentConfig::parse("[task]\nid = \"bio\"\n").unwrap()).unwrap();
    let keys = |v: &serde_json::Value| {
        let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
        k.sort();
        k
    };
    let props = &schema["properties"];
    assert_eq!(keys(props), keys(&cfg));
    for section in ["model", "method", "train", "run"] {
        assert_eq!(keys(&props[section]["properties"]), keys(&cfg[section]), "{section}");
    }
    assert_eq!(keys(&props["task"]["properties"]), keys(&cfg["task"]));
    assert_eq!(keys(&props["task"]["properties"]["source"]["oneOf"][0]["properties"]), keys(&cfg["task"]["source"]));
    let ids: Vec<&str> = props["task"]["properties"]["id"]["enum"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(ids, ncl_core::tasks::TASK_NAMES);
}
