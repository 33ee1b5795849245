//! End-to-end runs of the `nodepred` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nodepred(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nodepred"))
        .current_dir(dir)
        .env_remove("NODEPRED_OUT_DIR")
        .env_remove("NODEPRED_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    let text = fs::read_to_string(path).unwrap();
    let (version, body) = text.split_once('\n').unwrap();
    assert!(version.starts_with("% nodepred-"), "{version}");
    serde_json::from_str(body).unwrap()
}

const QUICK: &[&str] = &["--epochs", "4", "--patience", "2", "--dim", "16", "--layers", "2"];

fn synth_ba(dir: &Path, nodes: &str) {
    let out = nodepred(dir, &["synth", "--family", "ba", "--nodes", nodes, "--m", "3", "--seed", "1", "--out-dir", "g"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn synth_ba_writes_graph_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = nodepred(d, &["synth", "--family", "ba", "--nodes", "3000", "--m", "4", "--seed", "1", "--out-dir", "g"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(d.join("g/graph.edges")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("% nodepred-edges 1.0"));
    assert_eq!(lines.next(), Some("#nodes 3000 directed 0"));
    assert_eq!(lines.count(), (3000 - 4) * 4);
    let meta = json(&d.join("g/graph.meta.json"));
    assert_eq!(meta["edges"], (3000 - 4) * 4);
    let manifest = json(&d.join("g/manifest.json"));
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["artifacts"][0]["role"], "graph");
    assert_eq!(manifest["artifacts"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn synth_er_and_sample_plus_ba() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = nodepred(d, &["synth", "--family", "er", "--nodes", "1000", "--p", "0.01", "--seed", "7", "--out-dir", "er"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let meta = json(&d.join("er/graph.meta.json"));
    let edges = meta["edges"].as_f64().unwrap();
    // Binomial(499500, 0.01): mean 4995, sd about 70.
    assert!((edges - 4995.0).abs() < 5.0 * 70.3, "{edges}");

    let out = nodepred(
        d,
        &["synth", "--family", "sample+ba", "--train-graph", "er/graph.edges", "--test-count", "250", "--m", "4", "--out-dir", "s"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let part = fs::read_to_string(d.join("s/partition.txt")).unwrap();
    let tests = part.lines().filter(|l| *l == "test").count();
    assert_eq!(tests, 250);
    assert_eq!(part.lines().filter(|l| *l == "train").count(), 1000);
}

#[test]
fn unsatisfiable_ego_sampling_reports_attempts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_ba(d, "50");
    let out = nodepred(d, &["synth", "--family", "ego", "--base", "g/graph.edges", "--nodes", "500", "--out-dir", "e"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("100 attempts"), "{}", stderr(&out));
}

#[test]
fn train_then_eval_at_two_test_purities() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_ba(d, "240");
    let mut args = vec!["train", "--graph", "g/graph.edges", "--gnn", "sage", "--lr", "0.05", "--train-purity", "80,10", "--seed", "3", "--out-dir", "t"];
    args.extend_from_slice(QUICK);
    let out = nodepred(d, &args);
    assert!(matches!(code(&out), 0 | 3), "{}", stderr(&out));
    for f in ["checkpoint.json", "train_report.json", "loss_curve.csv", "partition.txt", "train_examples.txt", "manifest.json"] {
        assert!(d.join("t").join(f).exists(), "missing {f}");
    }
    let manifest = json(&d.join("t/manifest.json"));
    assert_eq!(manifest["parameters"]["train"]["learning_rate"], 0.05);
    assert_eq!(manifest["seeds"]["plan"]["master"], 3);
    assert_eq!(manifest["inputs"][0]["role"], "graph");

    for (purity, dir_name) in [("100,0", "e100"), ("50,20", "e50")] {
        let out = nodepred(
            d,
            &[
                "eval", "--graph", "g/graph.edges", "--checkpoint", "t/checkpoint.json", "--partition", "t/partition.txt", "--seed", "3",
                "--test-purity", purity, "--runs", "5", "--ks", "1,2,3,5,10,20,30,50", "--out-dir", dir_name,
            ],
        );
        assert!(matches!(code(&out), 0 | 4), "{}", stderr(&out));
        let report = json(&d.join(dir_name).join("eval_report.json"));
        assert_eq!(report["runs"].as_array().unwrap().len(), 5);
        let keys: Vec<&String> = report["hits_at_k"].as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 8);
        let (a, b) = purity.split_once(',').unwrap();
        assert_eq!(report["test_purity"]["min_pure"].as_f64().unwrap(), a.parse::<f64>().unwrap());
        assert_eq!(report["test_purity"]["max_spurious"].as_f64().unwrap(), b.parse::<f64>().unwrap());
        let mean: f64 = report["runs"].as_array().unwrap().iter().map(|r| r["accuracy"].as_f64().unwrap()).sum::<f64>() / 5.0;
        if report["meaningless_runs_excluded"] == 0 {
            assert!((report["accuracy"].as_f64().unwrap() - mean).abs() < 1e-9);
        }
        let comp = fs::read_to_string(d.join(dir_name).join("composition.csv")).unwrap();
        assert!(comp.starts_with("% nodepred-composition 1.0\n"));
    }
}

#[test]
fn dummy_features_give_three_inputs_and_mismatch_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_ba(d, "120");
    let mut args = vec!["train", "--graph", "g/graph.edges", "--features", "dummy", "--out-dir", "t"];
    args.extend_from_slice(QUICK);
    let out = nodepred(d, &args);
    assert!(matches!(code(&out), 0 | 3), "{}", stderr(&out));
    let ckpt = json(&d.join("t/checkpoint.json"));
    assert_eq!(ckpt["config"]["input_dim"], 3);
    let out = nodepred(d, &["eval", "--graph", "g/graph.edges", "--checkpoint", "t/checkpoint.json", "--features", "random:5", "--out-dir", "e"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("configuration mismatch"), "{}", stderr(&out));
}

#[test]
fn replay_reproduces_a_run_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_ba(d, "150");
    let mut args = vec!["run", "--graph", "g/graph.edges", "--seed", "4", "--runs", "2", "--out-dir", "r1"];
    args.extend_from_slice(QUICK);
    let first = nodepred(d, &args);
    let recorded = code(&first);
    assert!(matches!(recorded, 0 | 3 | 4), "{}", stderr(&first));
    let out = nodepred(d, &["replay", "--manifest", "r1/manifest.json", "--out-dir", "r2"]);
    assert_eq!(code(&out), recorded, "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("reproduced") && !stdout(&out).contains("NOT"));
    for f in ["checkpoint.json", "train_report.json", "eval_report.json", "composition.csv"] {
        assert_eq!(fs::read(d.join("r1").join(f)).unwrap(), fs::read(d.join("r2").join(f)).unwrap(), "{f}");
    }
    // A changed input is refused.
    let mut g = fs::read_to_string(d.join("g/graph.edges")).unwrap();
    g.push_str("% touched\n");
    fs::write(d.join("g/graph.edges"), g).unwrap();
    let out = nodepred(d, &["replay", "--manifest", "r1/manifest.json", "--out-dir", "r3"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn gradcheck_passes_and_detects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = nodepred(d, &["gradcheck", "--out-dir", "a"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let report = json(&d.join("a/gradcheck.json"));
    assert!(report["report"]["max_rel_error"].as_f64().unwrap() < 1e-4);

    let start = std::time::Instant::now();
    let out = nodepred(d, &["gradcheck", "--layers", "1", "--dim", "4", "--out-dir", "b"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(start.elapsed().as_secs_f64() < 5.0);

    let out = nodepred(d, &["gradcheck", "--corrupt", "--out-dir", "c"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn sweep_runs_every_cell_with_threads() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_ba(d, "120");
    let mut args = vec![
        "sweep", "--vary", "seed=1;2", "--vary", "gnn=sage;gcn", "--threads", "2", "--out-dir", "sw", "--", "--graph", "g/graph.edges", "--runs",
        "1",
    ];
    args.extend_from_slice(QUICK);
    let out = nodepred(d, &args);
    assert!(matches!(code(&out), 0 | 3 | 4), "{}", stderr(&out));
    let summary = json(&d.join("sw/sweep.json"));
    let cells = summary.as_array().unwrap();
    assert_eq!(cells.len(), 4);
    assert_eq!(cells[1]["settings"], serde_json::json!([["seed", "1"], ["gnn", "gcn"]]));
    for i in 0..4 {
        let m = json(&d.join(format!("sw/cell-{i:03}/manifest.json")));
        assert_eq!(m["command"], "run");
    }
    let ck = json(&d.join("sw/cell-001/checkpoint.json"));
    assert_eq!(ck["config"]["layer_kind"], "gcn");
    // Same sweep sequentially gives the same checkpoints.
    let mut seq = args.clone();
    seq[6] = "1";
    seq[8] = "sw1";
    let out = nodepred(d, &seq);
    assert!(matches!(code(&out), 0 | 3 | 4), "{}", stderr(&out));
    for i in 0..4 {
        let f = format!("cell-{i:03}/checkpoint.json");
        assert_eq!(fs::read(d.join("sw").join(&f)).unwrap(), fs::read(d.join("sw1").join(&f)).unwrap());
    }
}

#[test]
fn environment_sets_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = Command::new(env!("CARGO_BIN_EXE_nodepred"))
        .current_dir(d)
        .env("NODEPRED_OUT_DIR", "from-env")
        .args(["synth", "--family", "er", "--nodes", "30", "--p", "0.1"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(d.join("from-env/graph.edges").exists());
}

#[test]
fn invalid_arguments_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&nodepred(d, &["train"])), 2);
    assert_eq!(code(&nodepred(d, &["train", "--graph", "x", "--train-purity", "80"])), 2);
    assert_eq!(code(&nodepred(d, &["synth", "--family", "er", "--nodes", "10"])), 2);
    assert_eq!(code(&nodepred(d, &["gradcheck", "--threads", "0"])), 2);
    synth_ba(d, "40");
    assert_eq!(code(&nodepred(d, &["split", "--graph", "g/graph.edges", "--test-fraction", "1.5"])), 2);
    assert_eq!(code(&nodepred(d, &["sweep", "--vary", "nonsense-flag=1;2", "--", "--graph", "g/graph.edges"])), 2);
    // Missing input files are "other" failures.
    assert_eq!(code(&nodepred(d, &["train", "--graph", "missing.edges"])), 1);
}

#[test]
fn meaningless_training_exits_3_and_still_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_ba(d, "120");
    // Constant features make every node embedding, and so every score, identical.
    let out = nodepred(d, &["train", "--graph", "g/graph.edges", "--features", "dummy", "--epochs", "2", "--patience", "1", "--dim", "8", "--out-dir", "t"]);
    assert_eq!(code(&out), 3, "{}{}", stdout(&out), stderr(&out));
    assert!(d.join("t/checkpoint.json").exists());
    assert_eq!(json(&d.join("t/train_report.json"))["meaningless"], true);
    assert_eq!(json(&d.join("t/manifest.json"))["exit_code"], 3);
}

#[test]
fn split_matches_the_split_used_by_train() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_ba(d, "100");
    assert_eq!(code(&nodepred(d, &["split", "--graph", "g/graph.edges", "--seed", "9", "--out-dir", "s"])), 0);
    let mut args = vec!["train", "--graph", "g/graph.edges", "--seed", "9", "--out-dir", "t"];
    args.extend_from_slice(QUICK);
    let out = nodepred(d, &args);
    assert!(matches!(code(&out), 0 | 3), "{}", stderr(&out));
    let a = fs::read_to_string(d.join("s/partition.txt")).unwrap();
    assert_eq!(a, fs::read_to_string(d.join("t/partition.txt")).unwrap());
    assert_eq!(a.lines().filter(|l| *l == "test").count(), 20);
}
