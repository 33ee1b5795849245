//! End-to-end runs: node split, negative graphs, example generation,
//! training and evaluation, with every random stage seeded from one master
//! seed.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::eval::{evaluate, EvalConfig, EvalReport};
use crate::examples::{generate_train_examples, CountStrategy, ExampleSet, Purity};
use crate::graph::{generate_negative_graph, split_nodes, Graph, NegativeGraph, NegativeScope, Partition, Subgraph};
use crate::model::{dummy_features, random_features, Adjacency, BatchObjective, GnnConfig, LayerKind, NodePredictor};
use crate::nn::{finite_diff_check, GradCheckConfig, GradCheckReport};
use crate::synth::erdos_renyi;
use crate::seed;
use crate::train::{train, TrainConfig, TrainReport};

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
pub const DEFAULT_RANDOM_FEATURE_DIM: usize = 32;

/// Where node features come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum FeatureSpec {
    /// Already attached to the graph (e.g. read from a file).
    Provided,
    /// Three all-ones columns.
    Dummy,
    /// Seeded uniform `[-1, 1]` values.
    Random { dim: usize },
}

impl FeatureSpec {
    pub fn input_dim(&self, g: &Graph) -> Result<usize> {
        match self {
            FeatureSpec::Provided => g
                .feature_dim()
                .ok_or_else(|| crate::Error::InvalidArgument("graph has no features attached".into())),
            FeatureSpec::Dummy => Ok(3),
            FeatureSpec::Random { dim } => Ok(*dim),
        }
    }
}

/// Returns `g` with features of the requested kind attached.
pub fn attach_features(g: Graph, spec: &FeatureSpec, features_seed: u64) -> Result<Graph> {
    let n = g.num_nodes();
    match spec {
        FeatureSpec::Provided => {
            if g.features().is_none() {
                return invalid("features were requested from the graph, but none are attached");
            }
            Ok(g)
        }
        FeatureSpec::Dummy => g.with_features(dummy_features(n)),
        FeatureSpec::Random { dim } if *dim == 0 => invalid("random feature dimension must be positive"),
        FeatureSpec::Random { dim } => g.with_features(random_features(n, *dim, features_seed)),
    }
}

/// Per-stage seeds, all derived from `master`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub master: u64,
    pub features: u64,
    pub split: u64,
    pub neg_train: u64,
    pub neg_whole: u64,
    pub train_examples: u64,
    pub train: u64,
    pub eval: u64,
}

impl SeedPlan {
    pub fn from_master(master: u64) -> SeedPlan {
        SeedPlan {
            master,
            features: seed::derive(master, "features"),
            split: seed::derive(master, "split"),
            neg_train: seed::derive(master, "neg-train"),
            neg_whole: seed::derive(master, "neg-whole"),
            train_examples: seed::derive(master, "train-examples"),
            train: seed::derive(master, "train"),
            eval: seed::derive(master, "eval"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layer_kind: LayerKind,
    pub num_layers: usize,
    pub embed_dim: usize,
    pub normalize_after_relu: bool,
    /// `None` means `[2k, k]`.
    pub mlp_hidden_dims: Option<Vec<usize>>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            layer_kind: LayerKind::Sage,
            num_layers: 5,
            embed_dim: 128,
            normalize_after_relu: true,
            mlp_hidden_dims: None,
        }
    }
}

impl ModelSpec {
    pub fn gnn_config(&self, input_dim: usize) -> GnnConfig {
        let mut cfg = GnnConfig::with_dims(self.layer_kind, input_dim, self.num_layers, self.embed_dim);
        cfg.normalize_after_relu = self.normalize_after_relu;
        if let Some(h) = &self.mlp_hidden_dims {
            cfg.mlp_hidden_dims = h.clone();
        }
        cfg
    }
}

/// Everything a train-then-evaluate run depends on besides the graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub test_fraction: f64,
    pub features: FeatureSpec,
    pub train_purity: Purity,
    pub strategy: CountStrategy,
    /// Negative edges per scope; `None` matches the positive edge count.
    pub negative_edges: Option<usize>,
    pub model: ModelSpec,
    /// Its `seed` field is replaced by the plan's training seed.
    pub train: TrainConfig,
    /// Its `seed` field is replaced by the plan's evaluation seed.
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            test_fraction: DEFAULT_TEST_FRACTION,
            features: FeatureSpec::Random {
                dim: DEFAULT_RANDOM_FEATURE_DIM,
            },
            train_purity: Purity::new(80.0, 10.0).expect("valid"),
            strategy: CountStrategy::Uniform,
            negative_edges: None,
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn seeds(&self) -> SeedPlan {
        SeedPlan::from_master(self.seed)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seeds().train,
            ..self.train.clone()
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            seed: self.seeds().eval,
            ..self.eval.clone()
        }
    }
}

/// Inputs to training, derived from a graph and a partition.
#[derive(Clone, Debug)]
pub struct Prepared {
    /// The whole graph with features attached.
    pub graph: Graph,
    pub partition: Partition,
    /// The graph induced by the training nodes, re-indexed.
    pub train: Subgraph,
    pub neg_train: NegativeGraph,
    pub neg_whole: NegativeGraph,
    pub train_examples: ExampleSet,
}

/// The graph with features, the node split and the whole-graph negatives:
/// everything evaluation needs.
#[derive(Clone, Debug)]
pub struct EvalInputs {
    pub graph: Graph,
    pub partition: Partition,
    pub neg_whole: NegativeGraph,
}

/// Attaches features, splits nodes unless a partition is given and samples
/// the whole-graph negatives. Uses the same seeds as [`prepare`].
pub fn prepare_eval(g: Graph, partition: Option<Partition>, cfg: &RunConfig) -> Result<EvalInputs> {
    let seeds = cfg.seeds();
    let graph = attach_features(g, &cfg.features, seeds.features)?;
    let partition = match partition {
        Some(p) if p.num_nodes() != graph.num_nodes() => {
            return invalid(format!(
                "partition covers {} nodes, graph has {}",
                p.num_nodes(),
                graph.num_nodes()
            ))
        }
        Some(p) => p,
        None => split_nodes(&graph, cfg.test_fraction, seeds.split)?,
    };
    let all: Vec<usize> = (0..graph.num_nodes()).collect();
    let neg_whole = generate_negative_graph(&graph, &all, cfg.negative_edges, NegativeScope::WholeGraph, seeds.neg_whole)?;
    Ok(EvalInputs {
        graph,
        partition,
        neg_whole,
    })
}

/// [`prepare_eval`], then the training subgraph, its negatives and the
/// training examples.
pub fn prepare(g: Graph, partition: Option<Partition>, cfg: &RunConfig) -> Result<Prepared> {
    let seeds = cfg.seeds();
    let EvalInputs {
        graph,
        partition,
        neg_whole,
    } = prepare_eval(g, partition, cfg)?;
    let train = graph.induced_subgraph(partition.train_nodes())?;
    let all_train: Vec<usize> = (0..train.graph.num_nodes()).collect();
    let neg_train = generate_negative_graph(&train.graph, &all_train, cfg.negative_edges, NegativeScope::TrainOnly, seeds.neg_train)?;
    let train_examples = generate_train_examples(&train.graph, &neg_train, cfg.train_purity, cfg.strategy, seeds.train_examples)?;
    Ok(Prepared {
        graph,
        partition,
        train,
        neg_train,
        neg_whole,
        train_examples,
    })
}

pub fn train_prepared(prep: &Prepared, cfg: &RunConfig) -> Result<(NodePredictor, TrainReport)> {
    let input_dim = cfg.features.input_dim(&prep.graph)?;
    train(&prep.train.graph, &prep.train_examples, &cfg.train_config(), &cfg.model.gnn_config(input_dim))
}

pub fn evaluate_prepared(model: &NodePredictor, prep: &Prepared, eval: &EvalConfig) -> Result<EvalReport> {
    evaluate(model, &prep.graph, &prep.neg_whole, &prep.partition, eval)
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub model: NodePredictor,
    pub train_report: TrainReport,
    pub eval_report: EvalReport,
    pub seeds: SeedPlan,
}

/// Prepare, train and evaluate with the configured test purity.
pub fn run(g: Graph, partition: Option<Partition>, cfg: &RunConfig) -> Result<RunOutput> {
    let prep = prepare(g, partition, cfg)?;
    let (model, train_report) = train_prepared(&prep, cfg)?;
    let eval_report = evaluate_prepared(&model, &prep, &cfg.eval_config())?;
    Ok(RunOutput {
        model,
        train_report,
        eval_report,
        seeds: cfg.seeds(),
    })
}

/// A small random problem for checking the full model's gradients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSpec {
    pub nodes: usize,
    pub edge_probability: f64,
    pub feature_dim: usize,
    pub layer_kind: LayerKind,
    pub num_layers: usize,
    pub embed_dim: usize,
    pub normalize_after_relu: bool,
    /// All-zero node features instead of random ones.
    pub zero_features: bool,
    pub seed: u64,
}

impl Default for GradcheckSpec {
    fn default() -> Self {
        GradcheckSpec {
            nodes: 20,
            edge_probability: 0.2,
            feature_dim: 4,
            layer_kind: LayerKind::Sage,
            num_layers: 5,
            embed_dim: 16,
            normalize_after_relu: true,
            zero_features: false,
            seed: 0,
        }
    }
}

/// Builds a random graph with examples on it and compares the model's
/// analytic gradients with central differences. `corrupt` scales the first
/// GNN gradient by `1 + c` to show the check detects wrong gradients.
pub fn gradient_check(spec: &GradcheckSpec, check: &GradCheckConfig, corrupt: Option<f64>) -> Result<GradCheckReport> {
    let g = erdos_renyi(spec.nodes, spec.edge_probability, seed::derive(spec.seed, "graph"))?;
    let features = if spec.zero_features {
        crate::Matrix::zeros(spec.nodes, spec.feature_dim)
    } else {
        random_features(spec.nodes, spec.feature_dim, seed::derive(spec.seed, "features"))
    };
    let all: Vec<usize> = (0..spec.nodes).collect();
    let neg = generate_negative_graph(&g, &all, None, NegativeScope::TrainOnly, seed::derive(spec.seed, "negatives"))?;
    let purity = Purity::new(80.0, 10.0)?;
    let examples = generate_train_examples(&g, &neg, purity, CountStrategy::Uniform, seed::derive(spec.seed, "examples"))?;
    let mut cfg = GnnConfig::with_dims(spec.layer_kind, spec.feature_dim, spec.num_layers, spec.embed_dim);
    cfg.normalize_after_relu = spec.normalize_after_relu;
    let model = NodePredictor::new(cfg, seed::derive(spec.seed, "init"))?;
    let adj = Adjacency::from_graph(&g);
    let mut objective = BatchObjective {
        model,
        adj: &adj,
        features: &features,
        examples: examples.examples.iter().collect(),
        corrupt,
    };
    finite_diff_check(&mut objective, check)
}
