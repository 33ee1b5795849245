use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nodepred::eval::{evaluate, EvalConfig};
use nodepred::io::{self, kind};
use nodepred::model::{Checkpoint, NodePredictor};
use nodepred::nn::GradCheckConfig;
use nodepred::pipeline::{self, FeatureSpec, GradcheckSpec, ModelSpec, RunConfig, SeedPlan};
use nodepred::synth::{self, SynthSpec};
use nodepred::train::TrainReport;
use nodepred::{seed, Error, Graph, Partition, Result};
use serde_json::json;

use crate::args::*;
use crate::manifest::RunManifest;

/// How a command finished when it did not hit an error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Training collapsed to a single output class.
    Meaningless,
    /// Every evaluation run was meaningless.
    Inconclusive,
    /// A check (gradcheck, replay comparison, sweep cell) failed.
    Failed,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Failed => 1,
            Outcome::Meaningless => 3,
            Outcome::Inconclusive => 4,
        }
    }
}

pub fn error_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::ConfigMismatch(_) => 2,
        _ => 1,
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub fn dispatch(cli: Cli, args: Vec<String>) -> Result<Outcome> {
    let common = cli.command.common().clone();
    let mut manifest = RunManifest::new(cli.command.name(), args, common.threads);
    let out = common.out_dir.clone();
    fs::create_dir_all(&out)?;
    let outcome = match &cli.command {
        Command::Synth(a) => synth_cmd(a, &out, &mut manifest)?,
        Command::Split(a) => split_cmd(a, &out, &mut manifest)?,
        Command::Train(a) => train_cmd(a, &out, &mut manifest)?,
        Command::Eval(a) => eval_cmd(a, &out, &mut manifest)?,
        Command::Run(a) => run_cmd(a, &out, &mut manifest)?,
        Command::Gradcheck(a) => gradcheck_cmd(a, &out, &mut manifest)?,
        Command::Sweep(a) => crate::sweep::sweep_cmd(a, &out, &mut manifest)?,
        Command::Replay(a) => return crate::sweep::replay_cmd(a, &out),
    };
    manifest.write(&out, outcome.code())?;
    Ok(outcome)
}

fn synth_cmd(a: &SynthArgs, out: &Path, m: &mut RunManifest) -> Result<Outcome> {
    let base = match &a.base {
        Some(p) => {
            m.input("base", p)?;
            Some(io::read_edge_list(p)?)
        }
        None => None,
    };
    let need = |v: Option<usize>, flag: &str| v.ok_or_else(|| bad(format!("--{flag} is required for this family")));
    let base_ref = || base.as_ref().ok_or_else(|| bad("--base is required for this family"));
    let (graph, partition, metadata) = match a.family {
        Family::Reverse | Family::Undirect => {
            let b = base_ref()?;
            let g = if a.family == Family::Reverse { synth::reverse_edges(b)? } else { synth::undirect(b) };
            let family = if a.family == Family::Reverse { "reverse" } else { "undirect" };
            let meta = json!({
                "spec": {"family": family},
                "seed": a.seed,
                "directed": g.is_directed(),
                "nodes": g.num_nodes(),
                "edges": g.num_edges(),
                "average_degree": g.average_degree(),
            });
            (g, None, meta)
        }
        family => {
            let spec = match family {
                Family::Ba => SynthSpec::Ba {
                    nodes: need(a.nodes, "nodes")?,
                    m: a.m.unwrap_or_else(|| synth::default_attachment(base.as_ref())),
                },
                Family::Er => SynthSpec::Er {
                    nodes: need(a.nodes, "nodes")?,
                    p: a.p.ok_or_else(|| bad("--p is required for er"))?,
                },
                Family::Ego => SynthSpec::Ego {
                    target_nodes: need(a.nodes, "nodes")?,
                    band: parse_band(&a.band)?,
                    max_attempts: a.max_attempts,
                },
                Family::TopDegree => SynthSpec::TopDegreeSample {
                    nodes: need(a.nodes, "nodes")?,
                },
                Family::SamplePlusBa => SynthSpec::SamplePlusBa {
                    test_count: need(a.test_count, "test-count")?,
                    m: a.m.unwrap_or_else(|| synth::default_attachment(base.as_ref())),
                },
                Family::Reverse | Family::Undirect => unreachable!(),
            };
            let output = spec.generate(base.as_ref(), a.seed)?;
            (output.graph, output.partition, serde_json::to_value(&output.metadata)?)
        }
    };
    let graph_path = out.join(&a.output);
    io::write_edge_list(&graph_path, &graph)?;
    m.artifact("graph", &graph_path)?;
    let meta_path = out.join(format!("{}.meta.json", stem(&a.output)));
    io::write_json(&meta_path, kind::SYNTH_METADATA, &metadata)?;
    m.artifact("metadata", &meta_path)?;
    if let Some(p) = &partition {
        let path = out.join("partition.txt");
        io::write_partition(&path, p)?;
        m.artifact("partition", &path)?;
    }
    m.parameters = json!({"family": format!("{:?}", a.family).to_lowercase(), "metadata": metadata});
    m.seeds = json!({"generator": a.seed});
    println!(
        "synth: {} nodes, {} edges ({}) -> {}",
        graph.num_nodes(),
        graph.num_edges(),
        if graph.is_directed() { "directed" } else { "undirected" },
        graph_path.display()
    );
    Ok(Outcome::Success)
}

fn stem(name: &str) -> &str {
    Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or(name)
}

fn parse_band(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(',').ok_or_else(|| bad(format!("band {s:?} is not lower,upper")))?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|_| bad(format!("band component {x:?} is not a number")));
    Ok((p(a)?, p(b)?))
}

fn split_cmd(a: &SplitArgs, out: &Path, m: &mut RunManifest) -> Result<Outcome> {
    m.input("graph", &a.graph)?;
    let g = io::read_edge_list(&a.graph)?;
    let plan = SeedPlan::from_master(a.seed);
    let p = nodepred::graph::split_nodes(&g, a.test_fraction, plan.split)?;
    let path = out.join("partition.txt");
    io::write_partition(&path, &p)?;
    m.artifact("partition", &path)?;
    m.parameters = json!({"test_fraction": a.test_fraction});
    m.seeds = json!({"master": a.seed, "split": plan.split});
    println!("split: {} train, {} test -> {}", p.train_nodes().len(), p.test_nodes().len(), path.display());
    Ok(Outcome::Success)
}

/// Reads the graph, features and optional partition named by `d`.
fn load_data(d: &DataArgs, m: &mut RunManifest) -> Result<(Graph, Option<Partition>, FeatureSpec)> {
    m.input("graph", &d.graph)?;
    let mut g = io::read_edge_list(&d.graph)?;
    let spec = match FeatureArg::parse(&d.features).map_err(bad)? {
        FeatureArg::Dummy => FeatureSpec::Dummy,
        FeatureArg::Random(dim) => FeatureSpec::Random { dim },
        FeatureArg::File(p) => {
            m.input("features", &p)?;
            g = g.with_features(io::read_features(&p)?)?;
            FeatureSpec::Provided
        }
    };
    let partition = match &d.partition {
        Some(p) => {
            m.input("partition", p)?;
            Some(io::read_partition(p)?)
        }
        None => None,
    };
    Ok((g, partition, spec))
}

fn run_config(
    d: &DataArgs,
    features: FeatureSpec,
    model: Option<&ModelArgs>,
    optim: Option<&OptimArgs>,
    eval: Option<&EvalOptions>,
) -> RunConfig {
    let mut cfg = RunConfig {
        seed: d.seed,
        test_fraction: d.test_fraction,
        features,
        negative_edges: d.negative_edges,
        ..RunConfig::default()
    };
    if let Some(mo) = model {
        cfg.model = ModelSpec {
            layer_kind: mo.gnn,
            num_layers: mo.layers,
            embed_dim: mo.dim,
            normalize_after_relu: !mo.no_normalize,
            mlp_hidden_dims: mo.mlp.clone(),
        };
    }
    if let Some(o) = optim {
        cfg.train_purity = o.train_purity;
        cfg.strategy = o.strategy;
        cfg.train.learning_rate = o.lr;
        cfg.train.max_epochs = o.epochs;
        cfg.train.patience = o.patience;
        cfg.train.batch_size = o.batch_size;
        cfg.train.validation_fraction = o.validation_fraction;
    }
    if let Some(e) = eval {
        cfg.eval = EvalConfig {
            ks: e.ks.clone(),
            num_test_runs: e.runs,
            negative_pool_size: e.pool_size,
            test_purity: e.test_purity,
            strategy: e.test_strategy,
            eval_graph: e.eval_graph,
            threshold: e.threshold,
            seed: 0,
        };
    }
    cfg
}

fn seeds_json(plan: &SeedPlan) -> serde_json::Value {
    json!({
        "plan": plan,
        "train_init": seed::derive(plan.train, "init"),
        "train_validation": seed::derive(plan.train, "validation"),
        "train_shuffle": seed::derive(plan.train, "shuffle"),
    })
}

/// Writes the checkpoint, training report, loss curve, partition and the
/// training examples.
fn write_training(
    out: &Path,
    m: &mut RunManifest,
    prep: &pipeline::Prepared,
    model: &NodePredictor,
    report: &TrainReport,
) -> Result<()> {
    let ckpt = out.join("checkpoint.json");
    io::write_json(&ckpt, kind::CHECKPOINT, &model.to_checkpoint(report.init_seed))?;
    m.artifact("checkpoint", &ckpt)?;
    let rpt = out.join("train_report.json");
    io::write_json(&rpt, kind::TRAIN_REPORT, report)?;
    m.artifact("train-report", &rpt)?;
    let curve = out.join("loss_curve.csv");
    fs::write(&curve, io::format_loss_curve(report))?;
    m.artifact("loss-curve", &curve)?;
    let part = out.join("partition.txt");
    io::write_partition(&part, &prep.partition)?;
    m.artifact("partition", &part)?;
    let ex = out.join("train_examples.txt");
    io::write_examples(&ex, &prep.train_examples)?;
    m.artifact("train-examples", &ex)?;
    println!(
        "train: {} epochs{}, best epoch {}, val loss {}, val accuracy {:.2}%{} in {:.1}s",
        report.epochs_run,
        if report.stopped_early { " (early stop)" } else { "" },
        report.best_epoch,
        report.best_val_loss.map_or("-".to_string(), |l| format!("{l:.4}")),
        report.val_accuracy,
        if report.meaningless { ", MEANINGLESS" } else { "" },
        report.wall_time
    );
    Ok(())
}

fn write_evaluation(out: &Path, m: &mut RunManifest, report: &nodepred::eval::EvalReport) -> Result<()> {
    let rpt = out.join("eval_report.json");
    io::write_json(&rpt, kind::EVAL_REPORT, report)?;
    m.artifact("eval-report", &rpt)?;
    let comp = out.join("composition.csv");
    fs::write(&comp, io::format_composition(&report.composition_table))?;
    m.artifact("composition", &comp)?;
    let hits: Vec<String> = report.hits_at_k.iter().map(|(k, v)| format!("@{k}={v:.3}")).collect();
    println!(
        "eval: accuracy {:.2}%, MRR {:.4}, hits {} over {} runs ({} meaningless excluded){}",
        report.accuracy,
        report.mrr,
        hits.join(" "),
        report.runs.len(),
        report.meaningless_runs_excluded,
        if report.inconclusive { ", INCONCLUSIVE" } else { "" }
    );
    Ok(())
}

fn train_cmd(a: &TrainArgs, out: &Path, m: &mut RunManifest) -> Result<Outcome> {
    let (g, partition, features) = load_data(&a.data, m)?;
    let cfg = run_config(&a.data, features, Some(&a.model), Some(&a.optim), None);
    let prep = pipeline::prepare(g, partition, &cfg)?;
    let input_dim = cfg.features.input_dim(&prep.graph)?;
    m.parameters = json!({
        "run": &cfg,
        "gnn": cfg.model.gnn_config(input_dim),
        "train": cfg.train_config(),
    });
    m.seeds = seeds_json(&cfg.seeds());
    let (model, report) = pipeline::train_prepared(&prep, &cfg)?;
    write_training(out, m, &prep, &model, &report)?;
    Ok(if report.meaningless { Outcome::Meaningless } else { Outcome::Success })
}

fn eval_cmd(a: &EvalArgs, out: &Path, m: &mut RunManifest) -> Result<Outcome> {
    let (g, partition, features) = load_data(&a.data, m)?;
    m.input("checkpoint", &a.checkpoint)?;
    let ckpt: Checkpoint = io::read_json(&a.checkpoint, kind::CHECKPOINT)?;
    let model = NodePredictor::from_checkpoint(&ckpt)?;
    let cfg = run_config(&a.data, features, None, None, Some(&a.eval));
    let inputs = pipeline::prepare_eval(g, partition, &cfg)?;
    let input_dim = cfg.features.input_dim(&inputs.graph)?;
    if input_dim != ckpt.config.input_dim {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint expects {} feature columns, the graph has {input_dim}",
            ckpt.config.input_dim
        )));
    }
    let eval_cfg = cfg.eval_config();
    m.parameters = json!({"run": &cfg, "eval": &eval_cfg, "checkpoint_config": &ckpt.config});
    m.seeds = json!({"plan": cfg.seeds()});
    let report = evaluate(&model, &inputs.graph, &inputs.neg_whole, &inputs.partition, &eval_cfg)?;
    write_evaluation(out, m, &report)?;
    Ok(if report.inconclusive { Outcome::Inconclusive } else { Outcome::Success })
}

fn run_cmd(a: &RunArgs, out: &Path, m: &mut RunManifest) -> Result<Outcome> {
    let (g, partition, features) = load_data(&a.data, m)?;
    let cfg = run_config(&a.data, features, Some(&a.model), Some(&a.optim), Some(&a.eval));
    let prep = pipeline::prepare(g, partition, &cfg)?;
    let input_dim = cfg.features.input_dim(&prep.graph)?;
    m.parameters = json!({
        "run": &cfg,
        "gnn": cfg.model.gnn_config(input_dim),
        "train": cfg.train_config(),
        "eval": cfg.eval_config(),
    });
    m.seeds = seeds_json(&cfg.seeds());
    let (model, train_report) = pipeline::train_prepared(&prep, &cfg)?;
    write_training(out, m, &prep, &model, &train_report)?;
    let eval_report = pipeline::evaluate_prepared(&model, &prep, &cfg.eval_config())?;
    write_evaluation(out, m, &eval_report)?;
    Ok(if train_report.meaningless {
        Outcome::Meaningless
    } else if eval_report.inconclusive {
        Outcome::Inconclusive
    } else {
        Outcome::Success
    })
}

fn gradcheck_cmd(a: &GradcheckArgs, out: &Path, m: &mut RunManifest) -> Result<Outcome> {
    let spec = GradcheckSpec {
        nodes: a.nodes,
        edge_probability: a.edge_probability,
        feature_dim: a.feature_dim,
        layer_kind: a.gnn,
        num_layers: a.layers,
        embed_dim: a.dim,
        normalize_after_relu: !a.no_normalize,
        zero_features: a.zero_features,
        seed: a.seed,
    };
    let check = GradCheckConfig {
        tolerance: a.tolerance,
        coords_per_param: a.coords,
        seed: seed::derive(a.seed, "coords"),
        ..GradCheckConfig::default()
    };
    let start = Instant::now();
    let report = pipeline::gradient_check(&spec, &check, a.corrupt)?;
    let secs = start.elapsed().as_secs_f64();
    let path = out.join("gradcheck.json");
    io::write_json(&path, kind::GRADCHECK, &json!({"spec": &spec, "check": &check, "corrupt": a.corrupt, "report": &report, "passed": report.passed()}))?;
    m.artifact("gradcheck", &path)?;
    m.parameters = json!({"spec": &spec, "check": &check, "corrupt": a.corrupt});
    m.seeds = json!({"spec": a.seed, "coords": check.seed});
    println!(
        "gradcheck: {} ({} coordinates checked, {} kinks skipped, {} failures, max relative error {:.3e}, tolerance {:.1e}) in {secs:.2}s",
        if report.passed() { "PASS" } else { "FAIL" },
        report.checked,
        report.skipped_kinks,
        report.failures.len(),
        report.max_rel_error,
        report.tolerance
    );
    if let Some(w) = &report.worst {
        println!("gradcheck: worst coordinate {w:?}");
    }
    Ok(if report.passed() { Outcome::Success } else { Outcome::Failed })
}

pub(crate) fn absolute_path(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}
