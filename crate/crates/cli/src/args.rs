use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nodepred::eval::{EvalGraph, DEFAULT_KS};
use nodepred::{CountStrategy, LayerKind, Purity};

#[derive(Debug, Parser)]
#[command(name = "nodepred", version, about = "Train and evaluate GNN predictors for the links of unseen nodes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or transform a graph.
    #[command(args_override_self = true)]
    Synth(SynthArgs),
    /// Write an 80/20 (or other) train/test node partition.
    #[command(args_override_self = true)]
    Split(SplitArgs),
    /// Train a model and write its checkpoint.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test nodes.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Train, then evaluate, in one process.
    #[command(args_override_self = true)]
    Run(RunArgs),
    /// Compare analytic and finite-difference gradients of the full model.
    #[command(args_override_self = true)]
    Gradcheck(GradcheckArgs),
    /// Run `run` over the cartesian product of flag lists.
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
    /// Re-execute the command recorded in a manifest and compare outputs.
    #[command(args_override_self = true)]
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Split(_) => "split",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Run(_) => "run",
            Command::Gradcheck(_) => "gradcheck",
            Command::Sweep(_) => "sweep",
            Command::Replay(_) => "replay",
        }
    }

    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Synth(a) => &a.common,
            Command::Split(a) => &a.common,
            Command::Train(a) => &a.common,
            Command::Eval(a) => &a.common,
            Command::Run(a) => &a.common,
            Command::Gradcheck(a) => &a.common,
            Command::Sweep(a) => &a.common,
            Command::Replay(a) => &a.common,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Directory receiving all artifacts.
    #[arg(long, env = "NODEPRED_OUT_DIR", default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads. Only `sweep` runs work concurrently; `1` is the
    /// reference path.
    #[arg(long, env = "NODEPRED_THREADS", default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Ba,
    Er,
    Ego,
    TopDegree,
    #[value(name = "sample+ba")]
    SamplePlusBa,
    Reverse,
    Undirect,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    /// Node count (ba, er, top-degree) or target size (ego).
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Edges per new node (ba, sample+ba). Defaults to the base graph's
    /// rounded half average degree, or 4.
    #[arg(long)]
    pub m: Option<usize>,
    /// Edge probability (er).
    #[arg(long)]
    pub p: Option<f64>,
    /// Base graph for ego, top-degree, sample+ba, reverse and undirect.
    #[arg(long, alias = "train-graph")]
    pub base: Option<PathBuf>,
    /// New nodes attached by sample+ba.
    #[arg(long)]
    pub test_count: Option<usize>,
    /// Ego size band as `lower,upper` multiples of the target.
    #[arg(long, default_value = "0.6666666666666666,1.5")]
    pub band: String,
    #[arg(long, default_value_t = nodepred::synth::EGO_MAX_ATTEMPTS)]
    pub max_attempts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "graph.edges")]
    pub output: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, default_value_t = nodepred::pipeline::DEFAULT_TEST_FRACTION)]
    pub test_fraction: f64,
    /// Master seed; the split uses the same derived seed as `train`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Inputs shared by `train`, `eval` and `run`.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Edge-list file.
    #[arg(long)]
    pub graph: PathBuf,
    /// `dummy`, `random`, `random:<dim>` or a feature CSV file.
    #[arg(long, default_value = "random")]
    pub features: String,
    /// Partition file; without it nodes are split from the seed.
    #[arg(long)]
    pub partition: Option<PathBuf>,
    #[arg(long, default_value_t = nodepred::pipeline::DEFAULT_TEST_FRACTION)]
    pub test_fraction: f64,
    /// Negative edges per negative graph; defaults to the positive count.
    #[arg(long)]
    pub negative_edges: Option<usize>,
    /// Master seed for every random stage.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value = "sage", value_parser = parse_layer_kind)]
    pub gnn: LayerKind,
    #[arg(long, default_value_t = 5)]
    pub layers: usize,
    /// Embedding width of every GNN layer.
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    /// Skip row normalization after hidden-layer activations.
    #[arg(long)]
    pub no_normalize: bool,
    /// MLP hidden widths, e.g. `256,128`. Defaults to `2*dim,dim`.
    #[arg(long, value_delimiter = ',')]
    pub mlp: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Args)]
pub struct OptimArgs {
    /// `minPure,maxSpurious` in percent.
    #[arg(long, default_value = "80,10", value_parser = parse_purity)]
    pub train_purity: Purity,
    #[arg(long, default_value = "uniform", value_parser = parse_strategy)]
    pub strategy: CountStrategy,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub patience: usize,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
}

#[derive(Debug, Clone, Args)]
pub struct EvalOptions {
    /// `minPure,maxSpurious` in percent.
    #[arg(long, default_value = "80,10", value_parser = parse_purity)]
    pub test_purity: Purity,
    #[arg(long, default_value = "uniform", value_parser = parse_strategy)]
    pub test_strategy: CountStrategy,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KS.to_vec())]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    /// Cap on the shared negative pool.
    #[arg(long)]
    pub pool_size: Option<usize>,
    /// `full` or `observed` (test-node edges hidden from the GNN).
    #[arg(long, default_value = "full", value_parser = parse_eval_graph)]
    pub eval_graph: EvalGraph,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub eval: EvalOptions,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub eval: EvalOptions,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "sage", value_parser = parse_layer_kind)]
    pub gnn: LayerKind,
    #[arg(long, default_value_t = 5)]
    pub layers: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 20)]
    pub nodes: usize,
    #[arg(long, default_value_t = 0.2)]
    pub edge_probability: f64,
    #[arg(long, default_value_t = 4)]
    pub feature_dim: usize,
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long)]
    pub zero_features: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scale the first GNN gradient by `1 + c`; the check must then fail.
    #[arg(long, num_args = 0..=1, default_missing_value = "0.05")]
    pub corrupt: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Coordinates sampled per parameter array.
    #[arg(long, default_value_t = 64)]
    pub coords: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// `flag=v1;v2;...` (repeatable). Each cell passes `--flag v` to `run`.
    #[arg(long = "vary", value_name = "FLAG=VALUES")]
    pub vary: Vec<String>,
    /// Arguments shared by every cell, after `--`.
    #[arg(last = true)]
    pub base: Vec<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Skip the input digest check.
    #[arg(long)]
    pub ignore_digests: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

fn parse_purity(s: &str) -> Result<Purity, String> {
    s.parse::<Purity>().map_err(|e| e.to_string())
}

fn parse_layer_kind(s: &str) -> Result<LayerKind, String> {
    s.parse::<LayerKind>().map_err(|e| e.to_string())
}

fn parse_eval_graph(s: &str) -> Result<EvalGraph, String> {
    s.parse::<EvalGraph>().map_err(|e| e.to_string())
}

fn parse_strategy(s: &str) -> Result<CountStrategy, String> {
    match s {
        "uniform" => Ok(CountStrategy::Uniform),
        "extreme" => Ok(CountStrategy::Extreme),
        other => Err(format!("unknown count strategy {other:?} (expected uniform or extreme)")),
    }
}

/// Parsed `--features` value.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureArg {
    Dummy,
    Random(usize),
    File(PathBuf),
}

impl FeatureArg {
    pub fn parse(s: &str) -> Result<FeatureArg, String> {
        match s {
            "dummy" => Ok(FeatureArg::Dummy),
            "random" => Ok(FeatureArg::Random(nodepred::pipeline::DEFAULT_RANDOM_FEATURE_DIM)),
            _ => match s.strip_prefix("random:") {
                Some(d) => match d.parse::<usize>() {
                    Ok(dim) if dim > 0 => Ok(FeatureArg::Random(dim)),
                    _ => Err(format!("bad random feature dimension {d:?}")),
                },
                None => Ok(FeatureArg::File(PathBuf::from(s))),
            },
        }
    }
}
