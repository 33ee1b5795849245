//! Artifact files on disk: round trips, version lines and malformed input.

use std::fs;

use nodepred::eval::{evaluate, EvalConfig};
use nodepred::io::{self, kind};
use nodepred::model::Checkpoint;
use nodepred::pipeline::{self, RunConfig};
use nodepred::synth::barabasi_albert;
use nodepred::train::TrainConfig;
use nodepred::{Error, Matrix, NodePredictor};

fn small_run() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.model.embed_dim = 16;
    cfg.model.num_layers = 2;
    cfg.train = TrainConfig {
        max_epochs: 3,
        patience: 2,
        ..TrainConfig::default()
    };
    cfg.eval.num_test_runs = 2;
    cfg
}

#[test]
fn every_artifact_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let g = barabasi_albert(80, 2, 3).unwrap();
    let cfg = small_run();
    let prep = pipeline::prepare(g.clone(), None, &cfg).unwrap();
    let (model, report) = pipeline::train_prepared(&prep, &cfg).unwrap();

    let p = dir.path().join("g.edges");
    io::write_edge_list(&p, &g).unwrap();
    assert_eq!(io::read_edge_list(&p).unwrap(), g);

    let p = dir.path().join("x.csv");
    let x = prep.graph.features().unwrap().clone();
    io::write_features(&p, &x).unwrap();
    assert_eq!(io::read_features(&p).unwrap(), x);

    let p = dir.path().join("partition.txt");
    io::write_partition(&p, &prep.partition).unwrap();
    assert_eq!(io::read_partition(&p).unwrap(), prep.partition);

    let p = dir.path().join("examples.txt");
    io::write_examples(&p, &prep.train_examples).unwrap();
    assert_eq!(io::read_examples(&p).unwrap(), prep.train_examples);

    let p = dir.path().join("checkpoint.json");
    io::write_json(&p, kind::CHECKPOINT, &model.to_checkpoint(report.init_seed)).unwrap();
    let ckpt: Checkpoint = io::read_json(&p, kind::CHECKPOINT).unwrap();
    let restored = NodePredictor::from_checkpoint(&ckpt).unwrap();
    let a = evaluate(&model, &prep.graph, &prep.neg_whole, &prep.partition, &cfg.eval_config()).unwrap();
    let b = evaluate(&restored, &prep.graph, &prep.neg_whole, &prep.partition, &cfg.eval_config()).unwrap();
    assert_eq!(a, b);

    let p = dir.path().join("train_report.json");
    io::write_json(&p, kind::TRAIN_REPORT, &report).unwrap();
    let mut back: nodepred::train::TrainReport = io::read_json(&p, kind::TRAIN_REPORT).unwrap();
    back.wall_time = report.wall_time;
    assert_eq!(back, report);
}

#[test]
fn json_artifacts_require_their_version_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    let cfg = EvalConfig::default();
    io::write_json(&p, kind::EVAL_REPORT, &cfg).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("% nodepred-eval-report 1.0\n"));

    fs::write(&p, text.replacen("1.0", "2.0", 1)).unwrap();
    assert!(matches!(
        io::read_json::<EvalConfig>(&p, kind::EVAL_REPORT),
        Err(Error::UnsupportedVersion { .. })
    ));
    fs::write(&p, text.lines().skip(1).collect::<Vec<_>>().join("\n")).unwrap();
    assert!(io::read_json::<EvalConfig>(&p, kind::EVAL_REPORT).is_err());
    // A file of one kind is not accepted as another.
    fs::write(&p, &text).unwrap();
    assert!(io::read_json::<EvalConfig>(&p, kind::CHECKPOINT).is_err());
    // Minor revisions of the same major version are readable.
    fs::write(&p, text.replacen("1.0", "1.3", 1)).unwrap();
    assert_eq!(io::read_json::<EvalConfig>(&p, kind::EVAL_REPORT).unwrap(), cfg);
}

#[test]
fn external_edge_lists_may_omit_the_version_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("e.edges");
    fs::write(&p, "#nodes 4 directed 1\n% a comment\n0 1\n\n2 3\n").unwrap();
    let g = io::read_edge_list(&p).unwrap();
    assert!(g.is_directed());
    assert_eq!(g.edges(), &[(0, 1), (2, 3)]);
}

#[test]
fn malformed_files_report_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.edges");
    fs::write(&p, "#nodes 3 directed 0\n0 1\n1 x\n").unwrap();
    match io::read_edge_list(&p) {
        Err(Error::Parse { line, msg }) => {
            assert_eq!(line, 3);
            assert!(msg.contains("bad.edges"), "{msg}");
        }
        other => panic!("unexpected {other:?}"),
    }
    let p = dir.path().join("bad.csv");
    fs::write(&p, "1,2\n3\n").unwrap();
    assert!(matches!(io::read_features(&p), Err(Error::Parse { line: 2, .. })));
    let missing = dir.path().join("missing.txt");
    let err = io::read_partition(&missing).unwrap_err();
    assert!(err.to_string().contains("missing.txt"));
}

#[test]
fn feature_files_must_cover_every_node() {
    let g = barabasi_albert(10, 2, 1).unwrap();
    assert!(g.with_features(Matrix::zeros(9, 3)).is_err());
}
