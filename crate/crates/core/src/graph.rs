//! Graph representation, neighborhood queries, induced subgraphs, node
//! partitions and negative-graph sampling.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Which neighbors of a node to return for directed graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Sources of edges into the node.
    In,
    /// Targets of edges leaving the node.
    Out,
    Both,
}

/// An immutable simple graph over nodes `0..num_nodes`.
///
/// Edges are kept sorted. Undirected edges are stored once as `(min, max)`
/// and queried symmetrically. Self-loops are rejected and duplicates merged.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    directed: bool,
    edges: Vec<(usize, usize)>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    features: Option<Matrix>,
}

impl Graph {
    pub fn new<I>(num_nodes: usize, directed: bool, edges: I) -> Result<Graph>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut list = Vec::new();
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return invalid(format!(
                    "edge ({u}, {v}) has an endpoint outside 0..{num_nodes}"
                ));
            }
            if u == v {
                return invalid(format!("self-loop on node {u}"));
            }
            list.push(if directed || u < v { (u, v) } else { (v, u) });
        }
        list.sort_unstable();
        list.dedup();

        let mut out_adj = vec![Vec::new(); num_nodes];
        let mut in_adj = vec![Vec::new(); num_nodes];
        for &(u, v) in &list {
            out_adj[u].push(v);
            in_adj[v].push(u);
            if !directed {
                out_adj[v].push(u);
                in_adj[u].push(v);
            }
        }
        for adj in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            adj.sort_unstable();
        }
        Ok(Graph {
            num_nodes,
            directed,
            edges: list,
            out_adj,
            in_adj,
            features: None,
        })
    }

    /// Attaches a feature matrix with one row per node.
    pub fn with_features(mut self, features: Matrix) -> Result<Graph> {
        if features.rows() != self.num_nodes {
            return Err(Error::Shape(format!(
                "feature matrix has {} rows but the graph has {} nodes",
                features.rows(),
                self.num_nodes
            )));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("node features".into()));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn without_features(mut self) -> Graph {
        self.features = None;
        self
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Number of stored edges (unordered pairs for undirected graphs).
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> Option<&Matrix> {
        self.features.as_ref()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.features.as_ref().map(Matrix::cols)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes && self.out_adj[u].binary_search(&v).is_ok()
    }

    /// Sorted in-neighbors of `n` (all neighbors when undirected).
    #[inline]
    pub fn in_neighbors(&self, n: usize) -> &[usize] {
        &self.in_adj[n]
    }

    /// Sorted out-neighbors of `n` (all neighbors when undirected).
    #[inline]
    pub fn out_neighbors(&self, n: usize) -> &[usize] {
        &self.out_adj[n]
    }

    pub fn neighbors(&self, n: usize, mode: Direction) -> Result<Vec<usize>> {
        if n >= self.num_nodes {
            return invalid(format!("node {n} outside 0..{}", self.num_nodes));
        }
        Ok(match mode {
            Direction::In => self.in_adj[n].clone(),
            Direction::Out => self.out_adj[n].clone(),
            Direction::Both if !self.directed => self.out_adj[n].clone(),
            Direction::Both => {
                let mut all: Vec<usize> = self.in_adj[n]
                    .iter()
                    .chain(&self.out_adj[n])
                    .copied()
                    .collect();
                all.sort_unstable();
                all.dedup();
                all
            }
        })
    }

    /// Degree of `n`; in-degree plus out-degree for directed graphs.
    pub fn degree(&self, n: usize) -> usize {
        if self.directed {
            self.in_adj[n].len() + self.out_adj[n].len()
        } else {
            self.out_adj[n].len()
        }
    }

    /// Mean node degree (`2|E| / |V|`, counting both endpoints).
    pub fn average_degree(&self) -> f64 {
        if self.num_nodes == 0 {
            0.0
        } else {
            2.0 * self.edges.len() as f64 / self.num_nodes as f64
        }
    }

    /// Sub-graph induced by `keep`, re-indexed densely in ascending order of
    /// the original ids.
    pub fn induced_subgraph(&self, keep: &[usize]) -> Result<Subgraph> {
        if keep.is_empty() {
            return invalid("induced subgraph of an empty node set");
        }
        let mut new_to_old = keep.to_vec();
        new_to_old.sort_unstable();
        new_to_old.dedup();
        if let Some(&last) = new_to_old.last() {
            if last >= self.num_nodes {
                return invalid(format!("node {last} outside 0..{}", self.num_nodes));
            }
        }
        let mut old_to_new = vec![None; self.num_nodes];
        for (new, &old) in new_to_old.iter().enumerate() {
            old_to_new[old] = Some(new);
        }
        let edges = self.edges.iter().filter_map(|&(u, v)| match (old_to_new[u], old_to_new[v]) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        });
        let mut graph = Graph::new(new_to_old.len(), self.directed, edges)?;
        if let Some(f) = &self.features {
            graph.features = Some(f.select_rows(&new_to_old));
        }
        Ok(Subgraph {
            graph,
            new_to_old,
            old_to_new,
        })
    }

    /// Same nodes and features, with only the edges whose endpoints both
    /// satisfy `keep`.
    pub fn restrict_edges(&self, keep: impl Fn(usize) -> bool) -> Graph {
        let edges: Vec<_> = self
            .edges
            .iter()
            .copied()
            .filter(|&(u, v)| keep(u) && keep(v))
            .collect();
        let mut g = Graph::new(self.num_nodes, self.directed, edges)
            .expect("subset of valid edges is valid");
        g.features = self.features.clone();
        g
    }

    /// Checks the structural invariants. Construction guarantees them, so
    /// this is for tests and post-generation assertions.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for &(u, v) in &self.edges {
            if u >= self.num_nodes || v >= self.num_nodes {
                return invalid(format!("edge ({u}, {v}) out of range"));
            }
            if u == v {
                return invalid(format!("self-loop on {u}"));
            }
            if !self.directed && u > v {
                return invalid(format!("undirected edge ({u}, {v}) not canonical"));
            }
            if !seen.insert((u, v)) {
                return invalid(format!("duplicate edge ({u}, {v})"));
            }
        }
        if let Some(f) = &self.features {
            if f.rows() != self.num_nodes {
                return invalid("feature rows do not match node count");
            }
        }
        Ok(())
    }
}

/// An induced subgraph together with its index maps.
#[derive(Clone, Debug)]
pub struct Subgraph {
    pub graph: Graph,
    /// `new_to_old[i]` is the original id of new node `i`.
    pub new_to_old: Vec<usize>,
    /// `old_to_new[j]` is the new id of original node `j`, if kept.
    pub old_to_new: Vec<Option<usize>>,
}

/// A split of the nodes into disjoint, non-empty train and test sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    train: Vec<usize>,
    test: Vec<usize>,
    is_test: Vec<bool>,
}

impl Partition {
    /// Builds a partition from a per-node test flag.
    pub fn from_test_flags(is_test: Vec<bool>) -> Result<Partition> {
        let test: Vec<usize> = (0..is_test.len()).filter(|&i| is_test[i]).collect();
        let train: Vec<usize> = (0..is_test.len()).filter(|&i| !is_test[i]).collect();
        if test.is_empty() || train.is_empty() {
            return invalid(format!(
                "partition needs non-empty sides (train {}, test {})",
                train.len(),
                test.len()
            ));
        }
        Ok(Partition {
            train,
            test,
            is_test,
        })
    }

    pub fn from_test_nodes(num_nodes: usize, test_nodes: &[usize]) -> Result<Partition> {
        let mut flags = vec![false; num_nodes];
        for &t in test_nodes {
            if t >= num_nodes {
                return invalid(format!("test node {t} outside 0..{num_nodes}"));
            }
            flags[t] = true;
        }
        Partition::from_test_flags(flags)
    }

    pub fn train_nodes(&self) -> &[usize] {
        &self.train
    }

    pub fn test_nodes(&self) -> &[usize] {
        &self.test
    }

    pub fn num_nodes(&self) -> usize {
        self.is_test.len()
    }

    pub fn is_test(&self, n: usize) -> bool {
        self.is_test[n]
    }

    pub fn test_flags(&self) -> &[bool] {
        &self.is_test
    }
}

/// Uniform random split with `round(test_fraction * n)` test nodes.
pub fn split_nodes(g: &Graph, test_fraction: f64, rng_seed: u64) -> Result<Partition> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return invalid(format!("test fraction {test_fraction} not in (0, 1)"));
    }
    let n = g.num_nodes();
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test >= n {
        return invalid(format!(
            "test fraction {test_fraction} on {n} nodes leaves an empty side"
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(rng_seed));
    Partition::from_test_nodes(n, &order[..n_test])
}

/// Which positive graph a negative graph complements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeScope {
    TrainOnly,
    WholeGraph,
}

/// Randomly sampled non-edges of a positive graph, over the same node ids.
#[derive(Clone, Debug)]
pub struct NegativeGraph {
    graph: Graph,
    scope: NegativeScope,
    requested: usize,
    available: usize,
}

impl NegativeGraph {
    /// Wraps a fixed set of negative edges, checking they avoid `positive`.
    pub fn from_edges(
        positive: &Graph,
        edges: &[(usize, usize)],
        scope: NegativeScope,
    ) -> Result<NegativeGraph> {
        let graph = Graph::new(positive.num_nodes(), positive.is_directed(), edges.iter().copied())?;
        if let Some(&(u, v)) = graph.edges().iter().find(|&&(u, v)| positive.has_edge(u, v)) {
            return invalid(format!("negative edge ({u}, {v}) exists in the positive graph"));
        }
        let requested = graph.num_edges();
        Ok(NegativeGraph {
            graph,
            scope,
            requested,
            available: requested,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn scope(&self) -> NegativeScope {
        self.scope
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        self.graph.edges()
    }

    pub fn num_edges(&self) -> usize {
        self.graph.num_edges()
    }

    /// Count asked for before clamping.
    pub fn requested(&self) -> usize {
        self.requested
    }

    /// Number of non-edges that existed in the scope.
    pub fn available(&self) -> usize {
        self.available
    }

    /// True when fewer edges than requested could be produced.
    pub fn clamped(&self) -> bool {
        self.graph.num_edges() < self.requested
    }
}

/// Samples negative edges uniformly without replacement among the non-edges
/// of `positive` with both endpoints in `node_scope`.
///
/// `target_count` defaults to the number of positive edges inside the scope.
/// Requests above the number of available non-edges are clamped; check
/// [`NegativeGraph::clamped`].
pub fn generate_negative_graph(
    positive: &Graph,
    node_scope: &[usize],
    target_count: Option<usize>,
    scope: NegativeScope,
    rng_seed: u64,
) -> Result<NegativeGraph> {
    if node_scope.is_empty() {
        return invalid("negative graph over an empty node scope");
    }
    let n = positive.num_nodes();
    let mut nodes = node_scope.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    if nodes[nodes.len() - 1] >= n {
        return invalid("negative-graph scope contains out-of-range nodes");
    }
    let mut in_scope = vec![false; n];
    for &u in &nodes {
        in_scope[u] = true;
    }
    let positive_in_scope = positive
        .edges()
        .iter()
        .filter(|&&(u, v)| in_scope[u] && in_scope[v])
        .count();
    let s = nodes.len();
    let pairs = if positive.is_directed() {
        s * (s - 1)
    } else {
        s * (s - 1) / 2
    };
    let available = pairs - positive_in_scope;
    let requested = target_count.unwrap_or(positive_in_scope);
    let count = requested.min(available);

    let mut rng = seed::rng(rng_seed);
    let directed = positive.is_directed();
    let chosen: Vec<(usize, usize)> = if count * 2 > available {
        // Dense regime: enumerate the non-edges and take a random subset.
        let mut all = Vec::with_capacity(available);
        for (i, &u) in nodes.iter().enumerate() {
            let start = if directed { 0 } else { i + 1 };
            for &v in &nodes[start..] {
                if u != v && !positive.has_edge(u, v) {
                    all.push((u, v));
                }
            }
        }
        let (picked, _) = all.partial_shuffle(&mut rng, count);
        picked.to_vec()
    } else {
        let mut seen = HashSet::with_capacity(count * 2);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let u = nodes[rng.gen_range(0..s)];
            let v = nodes[rng.gen_range(0..s)];
            if u == v {
                continue;
            }
            let e = if directed || u < v { (u, v) } else { (v, u) };
            if positive.has_edge(e.0, e.1) || !seen.insert(e) {
                continue;
            }
            out.push(e);
        }
        out
    };
    Ok(NegativeGraph {
        graph: Graph::new(n, directed, chosen)?,
        scope,
        requested,
        available,
    })
}
