//! Test-time metrics: accuracy, Hits@k and MRR against a shared negative
//! pool, multi-run averaging and the composition breakdown.

use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::examples::{example_composition, generate_test_examples, CountStrategy, Example, Purity};
use crate::graph::{Graph, NegativeGraph, Partition};
use crate::model::{Adjacency, NodePredictor};
use crate::seed;
use crate::train::detect_meaningless;

pub const DEFAULT_KS: [usize; 8] = [1, 2, 3, 5, 10, 20, 30, 50];
pub const BUCKET_WIDTH: usize = 5;
pub const TRAIN_BUCKETS: usize = 11;
pub const TEST_BUCKETS: usize = 6;

/// Percentage of examples whose thresholded prediction (`p >= threshold`
/// means positive) equals the label.
pub fn accuracy(predictions: &[f64], labels: &[f64], threshold: f64) -> Result<f64> {
    if predictions.len() != labels.len() {
        return invalid(format!("{} predictions but {} labels", predictions.len(), labels.len()));
    }
    if predictions.is_empty() {
        return invalid("accuracy of an empty set");
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= threshold) == (y >= 0.5))
        .count();
    Ok(100.0 * correct as f64 / predictions.len() as f64)
}

/// `1 + |{s in neg : s >= pos}|`: ties count against the positive.
pub fn rank_positive(pos_score: f64, neg_scores: &[f64]) -> usize {
    1 + neg_scores.iter().filter(|&&s| s >= pos_score).count()
}

/// Hits@k for each `k` and the mean reciprocal rank of every positive
/// against the whole negative pool.
pub fn hits_and_mrr(pos_scores: &[f64], neg_scores: &[f64], ks: &[usize]) -> Result<(BTreeMap<usize, f64>, f64)> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return invalid("hits and MRR need at least one positive and one negative score");
    }
    let mut sorted = neg_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ranks: Vec<usize> = pos_scores
        .iter()
        .map(|&p| 1 + sorted.len() - sorted.partition_point(|&s| s < p))
        .collect();
    let n = ranks.len() as f64;
    let hits = ks
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
        .collect();
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    Ok((hits, mrr))
}

/// Which edges the GNN sees when embedding nodes for test examples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalGraph {
    /// The whole graph, including the edges of test nodes.
    #[default]
    Full,
    /// Train-train edges only; test nodes are isolated.
    Observed,
}

impl std::str::FromStr for EvalGraph {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(EvalGraph::Full),
            "observed" => Ok(EvalGraph::Observed),
            other => invalid(format!("unknown evaluation graph {other:?} (expected full or observed)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub num_test_runs: usize,
    /// Cap on the negative pool; `None` keeps every negative test example
    /// (at most one per test node).
    pub negative_pool_size: Option<usize>,
    pub test_purity: Purity,
    pub strategy: CountStrategy,
    pub eval_graph: EvalGraph,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: DEFAULT_KS.to_vec(),
            num_test_runs: 5,
            negative_pool_size: None,
            test_purity: Purity::new(80.0, 10.0).expect("valid"),
            strategy: CountStrategy::Uniform,
            eval_graph: EvalGraph::Full,
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.ks.contains(&0) {
            return invalid("ks must be a non-empty list of positive values");
        }
        if self.ks.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("ks must be strictly ascending");
        }
        if self.num_test_runs == 0 {
            return invalid("at least one test run is required");
        }
        if self.negative_pool_size == Some(0) {
            return invalid("negative pool size must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub correct: usize,
    pub total: usize,
}

/// Correct/total counts bucketed by how many train and test nodes an
/// example's member set contains. Buckets are 5 wide; the last row (50+)
/// and last column (25+) are open.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionTable {
    pub bucket_width: usize,
    /// `cells[train_bucket][test_bucket]`.
    pub cells: Vec<Vec<Cell>>,
}

impl Default for CompositionTable {
    fn default() -> Self {
        CompositionTable {
            bucket_width: BUCKET_WIDTH,
            cells: vec![vec![Cell::default(); TEST_BUCKETS]; TRAIN_BUCKETS],
        }
    }
}

impl CompositionTable {
    pub fn bucket(count: usize, buckets: usize) -> usize {
        (count / BUCKET_WIDTH).min(buckets - 1)
    }

    pub fn record(&mut self, train_members: usize, test_members: usize, correct: bool) {
        let cell = &mut self.cells[Self::bucket(train_members, TRAIN_BUCKETS)][Self::bucket(test_members, TEST_BUCKETS)];
        cell.total += 1;
        cell.correct += usize::from(correct);
    }

    pub fn total(&self) -> Cell {
        let mut sum = Cell::default();
        for c in self.cells.iter().flatten() {
            sum.correct += c.correct;
            sum.total += c.total;
        }
        sum
    }

    /// `"0-4"`, `"5-9"`, ..., with `"+"` on the open bucket.
    pub fn label(bucket: usize, buckets: usize) -> String {
        let lo = bucket * BUCKET_WIDTH;
        if bucket + 1 == buckets {
            format!("{lo}+")
        } else {
            format!("{lo}-{}", lo + BUCKET_WIDTH - 1)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub seed: u64,
    pub num_examples: usize,
    pub num_positive: usize,
    pub pool_size: usize,
    pub accuracy: f64,
    pub hits_at_k: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub meaningless: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Means over runs that were not meaningless; over all runs when the
    /// report is inconclusive.
    pub accuracy: f64,
    pub hits_at_k: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub runs: Vec<RunMetrics>,
    pub meaningless_runs_excluded: usize,
    /// Every run was meaningless.
    pub inconclusive: bool,
    pub composition_table: CompositionTable,
    pub tie_policy: String,
    pub threshold: f64,
    pub eval_graph: EvalGraph,
    pub test_purity: Purity,
}

/// Graph whose edges the model sees at test time.
pub fn forward_graph(g: &Graph, partition: &Partition, mode: EvalGraph) -> Graph {
    match mode {
        EvalGraph::Full => g.clone(),
        EvalGraph::Observed => g.restrict_edges(|n| !partition.is_test(n)),
    }
}

/// Scores `examples` by embedding every node over `forward`.
pub fn score_examples(model: &NodePredictor, forward: &Graph, examples: &[&Example]) -> Result<Vec<f64>> {
    let features = forward
        .features()
        .ok_or_else(|| crate::Error::InvalidArgument("graph has no node features".into()))?;
    let emb = model.embed(&Adjacency::from_graph(forward), features)?;
    model.score(&emb, examples)
}

/// Runs `num_test_runs` test phases, each on freshly generated test
/// examples, and aggregates the metrics.
pub fn evaluate(
    model: &NodePredictor,
    g: &Graph,
    neg_whole: &NegativeGraph,
    partition: &Partition,
    config: &EvalConfig,
) -> Result<EvalReport> {
    config.validate()?;
    let forward = forward_graph(g, partition, config.eval_graph);
    let features = forward
        .features()
        .ok_or_else(|| crate::Error::InvalidArgument("graph has no node features".into()))?;
    let emb = model.embed(&Adjacency::from_graph(&forward), features)?;

    let mut runs = Vec::with_capacity(config.num_test_runs);
    let mut table = CompositionTable::default();
    for r in 0..config.num_test_runs {
        let run_seed = seed::derive_index(config.seed, r as u64);
        let set = generate_test_examples(g, neg_whole, partition, config.test_purity, config.strategy, run_seed)?;
        let refs: Vec<&Example> = set.examples.iter().collect();
        let probs = model.score(&emb, &refs)?;
        let labels: Vec<f64> = refs.iter().map(|e| f64::from(e.label)).collect();
        for (ex, &p) in refs.iter().zip(&probs) {
            let (tr, te) = example_composition(ex, partition);
            table.record(tr, te, (p >= config.threshold) == ex.is_positive());
        }

        let pos: Vec<f64> = probs.iter().zip(&refs).filter(|(_, e)| e.is_positive()).map(|(&p, _)| p).collect();
        let mut neg: Vec<f64> = probs.iter().zip(&refs).filter(|(_, e)| !e.is_positive()).map(|(&p, _)| p).collect();
        if let Some(cap) = config.negative_pool_size {
            if cap < neg.len() {
                let mut rng = seed::rng(seed::derive(run_seed, "pool"));
                let mut keep = index::sample(&mut rng, neg.len(), cap).into_vec();
                keep.sort_unstable();
                neg = keep.into_iter().map(|i| neg[i]).collect();
            }
        }
        let (hits, mrr) = hits_and_mrr(&pos, &neg, &config.ks)?;
        runs.push(RunMetrics {
            run: r,
            seed: run_seed,
            num_examples: refs.len(),
            num_positive: pos.len(),
            pool_size: neg.len(),
            accuracy: accuracy(&probs, &labels, config.threshold)?,
            hits_at_k: hits,
            mrr,
            meaningless: detect_meaningless(&probs, &labels),
        });
    }

    let kept: Vec<&RunMetrics> = runs.iter().filter(|r| !r.meaningless).collect();
    let inconclusive = kept.is_empty();
    let basis: Vec<&RunMetrics> = if inconclusive { runs.iter().collect() } else { kept };
    let m = basis.len() as f64;
    let hits_at_k = config
        .ks
        .iter()
        .map(|&k| (k, basis.iter().map(|r| r.hits_at_k[&k]).sum::<f64>() / m))
        .collect();
    Ok(EvalReport {
        accuracy: basis.iter().map(|r| r.accuracy).sum::<f64>() / m,
        hits_at_k,
        mrr: basis.iter().map(|r| r.mrr).sum::<f64>() / m,
        meaningless_runs_excluded: runs.iter().filter(|r| r.meaningless).count(),
        inconclusive,
        runs,
        composition_table: table,
        tie_policy: "pessimistic".into(),
        threshold: config.threshold,
        eval_graph: config.eval_graph,
        test_purity: config.test_purity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[0.9, 0.1], &[1.0, 0.0], 0.5).unwrap(), 100.0);
        assert_eq!(accuracy(&[0.5; 4], &[1.0, 0.0, 1.0, 0.0], 0.5).unwrap(), 50.0);
        assert!(accuracy(&[], &[], 0.5).is_err());
        assert!(accuracy(&[0.5], &[], 0.5).is_err());
    }

    #[test]
    fn rank_cases() {
        assert_eq!(rank_positive(0.9, &[0.1, 0.2, 0.3]), 1);
        assert_eq!(rank_positive(0.5, &[0.5, 0.4]), 2);
    }

    #[test]
    fn hits_and_mrr_extremes() {
        let (h, mrr) = hits_and_mrr(&[0.9], &[0.1, 0.2], &[1, 2]).unwrap();
        assert_eq!((h[&1], mrr), (1.0, 1.0));
        let (h, mrr) = hits_and_mrr(&[0.0], &[0.1, 0.2, 0.3], &[1, 3, 4]).unwrap();
        assert_eq!((h[&1], h[&3], h[&4]), (0.0, 0.0, 1.0));
        assert_eq!(mrr, 0.25);
        assert!(hits_and_mrr(&[], &[0.1], &[1]).is_err());
    }

    #[test]
    fn composition_buckets() {
        assert_eq!(CompositionTable::bucket(4, TRAIN_BUCKETS), 0);
        assert_eq!(CompositionTable::bucket(5, TRAIN_BUCKETS), 1);
        assert_eq!(CompositionTable::bucket(49, TRAIN_BUCKETS), 9);
        assert_eq!(CompositionTable::bucket(50, TRAIN_BUCKETS), 10);
        assert_eq!(CompositionTable::bucket(500, TRAIN_BUCKETS), 10);
        assert_eq!(CompositionTable::bucket(25, TEST_BUCKETS), 5);
        assert_eq!(CompositionTable::label(3, TRAIN_BUCKETS), "15-19");
        assert_eq!(CompositionTable::label(10, TRAIN_BUCKETS), "50+");
        assert_eq!(CompositionTable::label(5, TEST_BUCKETS), "25+");
        let mut t = CompositionTable::default();
        t.record(17, 2, true);
        t.record(16, 3, false);
        assert_eq!(t.cells[3][0], Cell { correct: 1, total: 2 });
        assert_eq!(t.total().total, 2);
    }

    #[test]
    fn eval_config_validation() {
        assert!(EvalConfig::default().validate().is_ok());
        let bad = EvalConfig {
            ks: vec![3, 1],
            ..EvalConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = EvalConfig {
            num_test_runs: 0,
            ..EvalConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
