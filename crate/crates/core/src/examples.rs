//! Purity-constrained positive and negative examples.
//!
//! An example pairs a target node `t` with a candidate neighborhood `S`.
//! For a positive example the *pure* pool is `t`'s positive neighbors and
//! the *spurious* pool its negative neighbors; negative examples swap the two.
//! `S` holds at least `ceil(|pure| * min_pure / 100)` pure nodes and at most
//! `floor(|spurious| * max_spurious / 100)` spurious ones.
//!
//! Neighbors are taken along incoming edges, which coincide with all
//! neighbors on undirected graphs.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, NegativeGraph, NegativeScope, Partition};
use crate::seed;

/// `(min_pure, max_spurious)` percentages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Purity {
    pub min_pure: f64,
    pub max_spurious: f64,
}

impl Purity {
    pub fn new(min_pure: f64, max_spurious: f64) -> Result<Purity> {
        for (name, v) in [("min_pure", min_pure), ("max_spurious", max_spurious)] {
            if !(0.0..=100.0).contains(&v) {
                return invalid(format!("{name} = {v} outside [0, 100]"));
            }
        }
        Ok(Purity {
            min_pure,
            max_spurious,
        })
    }

    /// `(100, 0)`: every pure node, no spurious ones.
    pub fn exact() -> Purity {
        Purity {
            min_pure: 100.0,
            max_spurious: 0.0,
        }
    }
}

impl fmt::Display for Purity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.min_pure, self.max_spurious)
    }
}

impl FromStr for Purity {
    type Err = Error;

    /// Parses the `min,max` syntax, e.g. `80,10`.
    fn from_str(s: &str) -> Result<Purity> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| Error::InvalidArgument(format!("purity '{s}' is not of the form min,max")))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("purity component '{x}' is not a number")))
        };
        Purity::new(parse(a)?, parse(b)?)
    }
}

/// `(min_pure_count, max_spurious_count)` for pools of the given sizes.
pub fn pure_spurious_bounds(purity: Purity, n_pure_avail: usize, n_spur_avail: usize) -> (usize, usize) {
    // Products are computed in hundredths so that e.g. 3 * 70% is exactly 2.1.
    let min_pure = ceil_div(n_pure_avail as u128 * hundredths(purity.min_pure), 10_000);
    let max_spur = (n_spur_avail as u128 * hundredths(purity.max_spurious)) / 10_000;
    (min_pure as usize, max_spur as usize)
}

fn hundredths(pct: f64) -> u128 {
    (pct * 100.0).round() as u128
}

fn ceil_div(a: u128, b: u128) -> u128 {
    a.div_ceil(b)
}

/// How many pure and spurious nodes to draw inside the legal ranges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountStrategy {
    /// Uniform over `[min_pure_count, |pure|]` and `[0, max_spurious_count]`.
    #[default]
    Uniform,
    /// Always the noisiest legal example: the fewest pure nodes and the most
    /// spurious ones.
    Extreme,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    /// The candidate neighborhood `S`, sorted.
    pub members: Vec<usize>,
    pub target: usize,
    /// 1 for positive examples.
    pub label: u8,
    pub pure_count: usize,
    pub spurious_count: usize,
}

impl Example {
    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

/// Draws one example for `target`. Returns `None` (skip) when `pure_pool` is
/// empty. At least one pure node is always taken, so `S` is never empty.
pub fn make_example(
    target: usize,
    pure_pool: &[usize],
    spurious_pool: &[usize],
    purity: Purity,
    label: u8,
    strategy: CountStrategy,
    rng_seed: u64,
) -> Option<Example> {
    if pure_pool.is_empty() {
        return None;
    }
    debug_assert!(!pure_pool.contains(&target) && !spurious_pool.contains(&target));
    let (min_pure, max_spur) = pure_spurious_bounds(purity, pure_pool.len(), spurious_pool.len());
    let lo = min_pure.max(1);
    let mut rng = seed::rng(rng_seed);
    let (k_pure, k_spur) = match strategy {
        CountStrategy::Uniform => (
            rng.gen_range(lo..=pure_pool.len()),
            rng.gen_range(0..=max_spur),
        ),
        CountStrategy::Extreme => (lo, max_spur),
    };
    let mut members: Vec<usize> = index::sample(&mut rng, pure_pool.len(), k_pure)
        .into_iter()
        .map(|i| pure_pool[i])
        .collect();
    members.extend(
        index::sample(&mut rng, spurious_pool.len(), k_spur)
            .into_iter()
            .map(|i| spurious_pool[i]),
    );
    members.sort_unstable();
    Some(Example {
        members,
        target,
        label,
        pure_count: k_pure,
        spurious_count: k_spur,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleScope {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleSet {
    pub examples: Vec<Example>,
    pub purity: Purity,
    pub scope: ExampleScope,
    pub seed: u64,
    /// Targets without a positive example (no positive neighbors).
    pub skipped_positive: usize,
    /// Targets without a negative example (no negative neighbors).
    pub skipped_negative: usize,
}

impl ExampleSet {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn positives(&self) -> impl Iterator<Item = &Example> {
        self.examples.iter().filter(|e| e.is_positive())
    }

    pub fn negatives(&self) -> impl Iterator<Item = &Example> {
        self.examples.iter().filter(|e| !e.is_positive())
    }
}

/// One positive and one negative example per target, each from its own
/// RNG substream keyed by `(seed, target, label)`.
fn generate(
    targets: &[usize],
    positive: &Graph,
    negative: &Graph,
    purity: Purity,
    strategy: CountStrategy,
    scope: ExampleScope,
    rng_seed: u64,
) -> Result<ExampleSet> {
    let mut examples = Vec::with_capacity(targets.len() * 2);
    let (mut skipped_positive, mut skipped_negative) = (0, 0);
    for &t in targets {
        let pos = positive.in_neighbors(t);
        let neg = negative.in_neighbors(t);
        let stream = seed::derive_index(rng_seed, t as u64);
        match make_example(t, pos, neg, purity, 1, strategy, seed::derive_index(stream, 1)) {
            Some(e) => examples.push(e),
            None => skipped_positive += 1,
        }
        match make_example(t, neg, pos, purity, 0, strategy, seed::derive_index(stream, 0)) {
            Some(e) => examples.push(e),
            None => skipped_negative += 1,
        }
    }
    if examples.is_empty() {
        return Err(Error::NoExamples(format!(
            "{} targets, all without positive or negative neighbors",
            targets.len()
        )));
    }
    Ok(ExampleSet {
        examples,
        purity,
        scope,
        seed: rng_seed,
        skipped_positive,
        skipped_negative,
    })
}

/// Training examples over every node of the training graph.
pub fn generate_train_examples(
    g_train: &Graph,
    neg_train: &NegativeGraph,
    purity: Purity,
    strategy: CountStrategy,
    rng_seed: u64,
) -> Result<ExampleSet> {
    if neg_train.graph().num_nodes() != g_train.num_nodes() {
        return invalid("training graph and negative graph have different node sets");
    }
    let targets: Vec<usize> = (0..g_train.num_nodes()).collect();
    generate(
        &targets,
        g_train,
        neg_train.graph(),
        purity,
        strategy,
        ExampleScope::Train,
        rng_seed,
    )
}

/// Test examples targeting the test nodes, with pools from the whole graph
/// and its whole-graph negative counterpart.
pub fn generate_test_examples(
    g: &Graph,
    neg_whole: &NegativeGraph,
    partition: &Partition,
    purity: Purity,
    strategy: CountStrategy,
    rng_seed: u64,
) -> Result<ExampleSet> {
    if neg_whole.scope() != NegativeScope::WholeGraph {
        return invalid("test examples need a whole-graph negative graph");
    }
    if neg_whole.graph().num_nodes() != g.num_nodes() || partition.num_nodes() != g.num_nodes() {
        return invalid("graph, negative graph and partition disagree on the node count");
    }
    generate(
        partition.test_nodes(),
        g,
        neg_whole.graph(),
        purity,
        strategy,
        ExampleScope::Test,
        rng_seed,
    )
}

/// `(train_member_count, test_member_count)` of an example.
pub fn example_composition(ex: &Example, partition: &Partition) -> (usize, usize) {
    let test = ex.members.iter().filter(|&&m| partition.is_test(m)).count();
    (ex.members.len() - test, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_negative_graph, Direction};

    fn tiny() -> Graph {
        let e = [(1, 2), (1, 6), (2, 4), (3, 4), (3, 5), (3, 6), (3, 7), (4, 7), (6, 8), (7, 8)];
        Graph::new(8, false, e.iter().map(|&(u, v)| (u - 1, v - 1))).unwrap()
    }

    fn tiny_train_and_neg() -> (Graph, NegativeGraph) {
        let train = tiny().induced_subgraph(&[0, 1, 2, 3, 4, 5]).unwrap().graph;
        let dashed = [(1, 3), (1, 4), (1, 5), (2, 3), (2, 5), (2, 6), (4, 5), (4, 6), (5, 6)];
        let edges: Vec<_> = dashed.iter().map(|&(u, v)| (u - 1, v - 1)).collect();
        let neg = NegativeGraph::from_edges(&train, &edges, NegativeScope::TrainOnly).unwrap();
        (train, neg)
    }

    #[test]
    fn worked_bounds() {
        let p = Purity::new(70.0, 50.0).unwrap();
        assert_eq!(pure_spurious_bounds(p, 3, 2), (3, 1));
        assert_eq!(pure_spurious_bounds(Purity::exact(), 7, 9), (7, 0));
        assert_eq!(pure_spurious_bounds(Purity::new(80.0, 10.0).unwrap(), 7, 9), (6, 0));
        assert_eq!(pure_spurious_bounds(Purity::new(80.0, 10.0).unwrap(), 10, 10), (8, 1));
        assert_eq!(pure_spurious_bounds(Purity::new(0.0, 100.0).unwrap(), 4, 4), (0, 4));
    }

    #[test]
    fn purity_parsing() {
        let p: Purity = "80,10".parse().unwrap();
        assert_eq!(p, Purity::new(80.0, 10.0).unwrap());
        assert!("80".parse::<Purity>().is_err());
        assert!("101,0".parse::<Purity>().is_err());
        assert!("a,b".parse::<Purity>().is_err());
        assert_eq!(p.to_string(), "80,10");
    }

    #[test]
    fn worked_positive_example_on_n3() {
        let (train, neg) = tiny_train_and_neg();
        let pure = train.neighbors(2, Direction::In).unwrap();
        let spur = neg.graph().neighbors(2, Direction::In).unwrap();
        assert_eq!(pure, vec![3, 4, 5]);
        assert_eq!(spur, vec![0, 1]);
        let p = Purity::new(70.0, 50.0).unwrap();
        let mut saw_figure_set = false;
        for s in 0..200 {
            let ex = make_example(2, &pure, &spur, p, 1, CountStrategy::Uniform, s).unwrap();
            assert_eq!(ex.pure_count, 3);
            assert!(ex.spurious_count <= 1);
            saw_figure_set |= ex.members == vec![0, 3, 4, 5];
        }
        assert!(saw_figure_set);
    }

    #[test]
    fn exact_purity_takes_the_whole_pool() {
        let ex = make_example(9, &[1, 4, 7], &[2, 3], Purity::exact(), 1, CountStrategy::Uniform, 3).unwrap();
        assert_eq!(ex.members, vec![1, 4, 7]);
        assert_eq!((ex.pure_count, ex.spurious_count), (3, 0));
    }

    #[test]
    fn extreme_strategy_is_noisiest() {
        let p = Purity::new(50.0, 50.0).unwrap();
        let ex = make_example(0, &[1, 2, 3, 4], &[5, 6, 7, 8], p, 0, CountStrategy::Extreme, 1).unwrap();
        assert_eq!((ex.pure_count, ex.spurious_count), (2, 2));
    }

    #[test]
    fn empty_pure_pool_is_skipped() {
        assert!(make_example(0, &[], &[1, 2], Purity::exact(), 1, CountStrategy::Uniform, 0).is_none());
        // zero min-pure still takes one pure node
        let ex = make_example(0, &[3], &[], Purity::new(0.0, 0.0).unwrap(), 1, CountStrategy::Uniform, 0).unwrap();
        assert_eq!(ex.members, vec![3]);
    }

    #[test]
    fn constraint_oracle_over_many_draws() {
        let p = Purity::new(80.0, 10.0).unwrap();
        let pure: Vec<usize> = (10..27).collect();
        let spur: Vec<usize> = (30..61).collect();
        let (min_p, max_s) = (14, 3); // ceil(17*0.8)=14, floor(31*0.1)=3
        for s in 0..500 {
            let ex = make_example(0, &pure, &spur, p, 1, CountStrategy::Uniform, s).unwrap();
            let in_pure = ex.members.iter().filter(|m| pure.contains(m)).count();
            let in_spur = ex.members.iter().filter(|m| spur.contains(m)).count();
            assert!(in_pure >= min_p && in_spur <= max_s);
            assert_eq!(in_pure, ex.pure_count);
            assert_eq!(in_spur, ex.spurious_count);
            assert_eq!(in_pure + in_spur, ex.members.len());
        }
    }

    #[test]
    fn train_examples_on_the_tiny_graph() {
        let (train, neg) = tiny_train_and_neg();
        let set = generate_train_examples(&train, &neg, Purity::exact(), CountStrategy::Uniform, 1).unwrap();
        let pos_n1 = set.positives().find(|e| e.target == 0).unwrap();
        assert_eq!(pos_n1.members, vec![1, 5]);
        // every training node has both kinds of neighbors here
        assert_eq!(set.len(), 12);
        assert_eq!(set.scope, ExampleScope::Train);
        assert_eq!(set, generate_train_examples(&train, &neg, Purity::exact(), CountStrategy::Uniform, 1).unwrap());
    }

    #[test]
    fn isolated_train_node_has_no_positive_example() {
        let g = Graph::new(4, false, [(0, 1), (1, 2)]).unwrap();
        let neg = generate_negative_graph(&g, &[0, 1, 2, 3], None, NegativeScope::TrainOnly, 2).unwrap();
        let set = generate_train_examples(&g, &neg, Purity::exact(), CountStrategy::Uniform, 0).unwrap();
        assert!(set.positives().all(|e| e.target != 3));
        assert!(set.skipped_positive >= 1);
    }

    #[test]
    fn test_examples_use_the_whole_graph() {
        let g = tiny();
        let partition = Partition::from_test_nodes(8, &[6, 7]).unwrap();
        let neg = generate_negative_graph(&g, &(0..8).collect::<Vec<_>>(), None, NegativeScope::WholeGraph, 4).unwrap();
        let set = generate_test_examples(&g, &neg, &partition, Purity::exact(), CountStrategy::Uniform, 8).unwrap();
        let pos_n7 = set.positives().find(|e| e.target == 6).unwrap();
        assert_eq!(pos_n7.members, vec![2, 3, 7]);
        assert!(set.examples.iter().all(|e| partition.is_test(e.target)));
        assert_eq!(example_composition(pos_n7, &partition), (2, 1));

        let train_neg = NegativeGraph::from_edges(&g, &[], NegativeScope::TrainOnly).unwrap();
        assert!(generate_test_examples(&g, &train_neg, &partition, Purity::exact(), CountStrategy::Uniform, 8).is_err());
    }

    #[test]
    fn no_examples_is_an_error() {
        let g = Graph::new(3, false, std::iter::empty()).unwrap();
        let neg = NegativeGraph::from_edges(&g, &[], NegativeScope::TrainOnly).unwrap();
        assert!(matches!(
            generate_train_examples(&g, &neg, Purity::exact(), CountStrategy::Uniform, 0),
            Err(Error::NoExamples(_))
        ));
    }
}
