//! Synthetic and sampled graph families: Barabási–Albert, Erdős–Rényi,
//! planted partitions, egocentric k-hop samples, top-degree samples,
//! sample+BA hybrids, and the edge reversal / symmetrisation transforms.

use std::cmp::Reverse;
use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, Partition, Subgraph};
use crate::seed::{self, Rng};

/// Default acceptance band for egocentric samples, as multiples of the
/// requested size.
pub const EGO_BAND: (f64, f64) = (2.0 / 3.0, 3.0 / 2.0);
pub const EGO_MAX_ATTEMPTS: usize = 100;
pub const DEFAULT_ATTACHMENT: usize = 4;

/// Attachment count matching a reference graph: `round(avg_degree / 2)`,
/// at least 1, or [`DEFAULT_ATTACHMENT`] without a reference.
pub fn default_attachment(reference: Option<&Graph>) -> usize {
    match reference {
        Some(g) => ((g.average_degree() / 2.0).round() as usize).max(1),
        None => DEFAULT_ATTACHMENT,
    }
}

/// Degree-proportional target selection state shared by the BA generators.
struct Attachment {
    /// One entry per edge endpoint, so uniform draws are degree-proportional.
    endpoints: Vec<usize>,
    degree: Vec<usize>,
    support: usize,
}

impl Attachment {
    fn new(g: Option<&Graph>, capacity: usize) -> Attachment {
        let mut a = Attachment {
            endpoints: Vec::with_capacity(capacity),
            degree: Vec::with_capacity(capacity),
            support: 0,
        };
        if let Some(g) = g {
            a.degree.resize(g.num_nodes(), 0);
            for &(u, v) in g.edges() {
                a.endpoints.push(u);
                a.endpoints.push(v);
                a.degree[u] += 1;
                a.degree[v] += 1;
            }
            a.support = a.degree.iter().filter(|&&d| d > 0).count();
        }
        a
    }

    fn add_node(&mut self) -> usize {
        self.degree.push(0);
        self.degree.len() - 1
    }

    /// Picks `m` distinct existing nodes, each with probability proportional
    /// to its current degree; uniform when every degree is zero. If fewer than
    /// `m` nodes have positive degree, those are all taken and the rest are
    /// drawn uniformly from the zero-degree nodes.
    fn pick(&self, excluding: usize, m: usize, rng: &mut Rng) -> Vec<usize> {
        let existing = excluding;
        let mut chosen: Vec<usize> = Vec::with_capacity(m);
        if self.support >= m {
            while chosen.len() < m {
                let t = self.endpoints[rng.gen_range(0..self.endpoints.len())];
                if !chosen.contains(&t) {
                    chosen.push(t);
                }
            }
            return chosen;
        }
        chosen.extend((0..existing).filter(|&u| self.degree[u] > 0));
        let zero: Vec<usize> = (0..existing).filter(|&u| self.degree[u] == 0).collect();
        let need = m - chosen.len();
        for i in index::sample(rng, zero.len(), need).into_iter() {
            chosen.push(zero[i]);
        }
        chosen
    }

    fn connect(&mut self, u: usize, v: usize) {
        for x in [u, v] {
            if self.degree[x] == 0 {
                self.support += 1;
            }
            self.degree[x] += 1;
            self.endpoints.push(x);
        }
    }
}

/// Undirected preferential-attachment graph grown from `m` isolated seed
/// nodes; every later node attaches `m` edges, giving `(n - m) * m` edges.
pub fn barabasi_albert(n: usize, m: usize, rng_seed: u64) -> Result<Graph> {
    if m < 1 || m >= n {
        return invalid(format!("BA needs 1 <= m < n, got m={m}, n={n}"));
    }
    let mut rng = seed::rng(rng_seed);
    let mut att = Attachment::new(None, n);
    for _ in 0..m {
        att.add_node();
    }
    let mut edges = Vec::with_capacity((n - m) * m);
    for _ in m..n {
        let v = att.degree.len();
        let targets = att.pick(v, m, &mut rng);
        att.add_node();
        for t in targets {
            edges.push((t, v));
            att.connect(t, v);
        }
    }
    Graph::new(n, false, edges)
}

/// Undirected G(n, p) graph.
pub fn erdos_renyi(n: usize, p: f64, rng_seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("edge probability {p} not in [0, 1]"));
    }
    let mut rng = seed::rng(rng_seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, false, edges)
}

/// Undirected planted-partition graph: nodes are assigned to consecutive
/// blocks of the given sizes, pairs inside a block are joined with
/// probability `p_in` and pairs across blocks with `p_out`. Returns the
/// graph and each node's block.
pub fn planted_partition(sizes: &[usize], p_in: f64, p_out: f64, rng_seed: u64) -> Result<(Graph, Vec<usize>)> {
    for p in [p_in, p_out] {
        if !(0.0..=1.0).contains(&p) {
            return invalid(format!("edge probability {p} not in [0, 1]"));
        }
    }
    let block: Vec<usize> = sizes.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat_n(b, s)).collect();
    let n = block.len();
    let mut rng = seed::rng(rng_seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if block[u] == block[v] { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Ok((Graph::new(n, false, edges)?, block))
}

/// Edge probability giving `edges` expected edges on `n` nodes.
pub fn er_probability_for_edges(n: usize, edges: usize) -> Result<f64> {
    let pairs = n * n.saturating_sub(1) / 2;
    if pairs == 0 || edges > pairs {
        return invalid(format!("{edges} edges do not fit on {n} nodes"));
    }
    Ok(edges as f64 / pairs as f64)
}

/// Result of egocentric sampling.
#[derive(Clone, Debug)]
pub struct EgoSample {
    pub subgraph: Subgraph,
    pub start: usize,
    pub hops: usize,
    pub attempts: usize,
}

/// Grows k-hop neighborhoods from random start nodes until one lands inside
/// `[band.0 * target, band.1 * target]` nodes at the first hop count that
/// reaches `target`; returns the induced subgraph.
pub fn ego_sample(
    base: &Graph,
    target_nodes: usize,
    band: (f64, f64),
    rng_seed: u64,
    max_attempts: usize,
) -> Result<EgoSample> {
    if base.is_directed() {
        return invalid("ego sampling expects an undirected base graph");
    }
    if !(band.0 < 1.0 && band.1 > 1.0) {
        return invalid(format!("ego band {band:?} must satisfy lower < 1 < upper"));
    }
    if target_nodes < 2 || base.num_nodes() == 0 {
        return invalid("ego sampling needs target >= 2 and a non-empty base");
    }
    let lo = band.0 * target_nodes as f64;
    let hi = band.1 * target_nodes as f64;
    let mut rng = seed::rng(rng_seed);
    let n = base.num_nodes();
    let mut seen = vec![false; n];
    for attempt in 1..=max_attempts {
        let start = rng.gen_range(0..n);
        seen.iter_mut().for_each(|s| *s = false);
        seen[start] = true;
        let mut reached = vec![start];
        let mut frontier = VecDeque::from([start]);
        let mut hops = 0;
        while reached.len() < target_nodes && !frontier.is_empty() {
            let mut next = VecDeque::new();
            for u in frontier.drain(..) {
                for &v in base.out_neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        reached.push(v);
                        next.push_back(v);
                    }
                }
            }
            frontier = next;
            hops += 1;
        }
        let count = reached.len() as f64;
        if reached.len() >= target_nodes && count >= lo && count <= hi {
            return Ok(EgoSample {
                subgraph: base.induced_subgraph(&reached)?,
                start,
                hops,
                attempts: attempt,
            });
        }
    }
    Err(Error::SamplingFailed {
        attempts: max_attempts,
        reason: format!(
            "no k-hop sample within [{lo:.1}, {hi:.1}] nodes for target {target_nodes}"
        ),
    })
}

/// Induced subgraph on the `n` highest-degree nodes (ties to the smaller id).
pub fn top_degree_sample(base: &Graph, n: usize) -> Result<Subgraph> {
    if n == 0 || n > base.num_nodes() {
        return invalid(format!(
            "cannot take {n} nodes from a graph of {}",
            base.num_nodes()
        ));
    }
    let mut order: Vec<usize> = (0..base.num_nodes()).collect();
    order.sort_by_key(|&u| (Reverse(base.degree(u)), u));
    base.induced_subgraph(&order[..n])
}

/// Appends `test_count` nodes to `train_base` by preferential attachment
/// over all existing nodes. The appended nodes form the test side of the
/// returned partition. For a directed base, new edges point from the chosen
/// existing node to the new one, so attachments are in-neighbors of the
/// new node. Features are not carried over, since the new nodes have none.
pub fn sample_plus_ba(
    train_base: &Graph,
    test_count: usize,
    m: usize,
    rng_seed: u64,
) -> Result<(Graph, Partition)> {
    if test_count == 0 {
        return invalid("sample+ba needs at least one test node");
    }
    let base_n = train_base.num_nodes();
    if m == 0 || m > base_n {
        return invalid(format!(
            "attachment count {m} must be in 1..={base_n} for this base"
        ));
    }
    let mut rng = seed::rng(rng_seed);
    let mut att = Attachment::new(Some(train_base), base_n + test_count);
    let mut edges = train_base.edges().to_vec();
    for _ in 0..test_count {
        let v = att.degree.len();
        let targets = att.pick(v, m, &mut rng);
        att.add_node();
        for t in targets {
            edges.push((t, v));
            att.connect(t, v);
        }
    }
    let total = base_n + test_count;
    let graph = Graph::new(total, train_base.is_directed(), edges)?;
    let test: Vec<usize> = (base_n..total).collect();
    let partition = Partition::from_test_nodes(total, &test)?;
    Ok((graph, partition))
}

/// Reverses every edge of a directed graph.
pub fn reverse_edges(g: &Graph) -> Result<Graph> {
    if !g.is_directed() {
        return invalid("reversing an undirected graph is a no-op");
    }
    let rev = Graph::new(g.num_nodes(), true, g.edges().iter().map(|&(u, v)| (v, u)))?;
    match g.features() {
        Some(f) => rev.with_features(f.clone()),
        None => Ok(rev),
    }
}

/// Symmetric closure of a directed graph. Undirected input is returned as is.
pub fn undirect(g: &Graph) -> Graph {
    if !g.is_directed() {
        return g.clone();
    }
    let u = Graph::new(g.num_nodes(), false, g.edges().iter().copied())
        .expect("edges of a valid graph are valid");
    match g.features() {
        Some(f) => u.with_features(f.clone()).expect("same node count"),
        None => u,
    }
}

/// A generator request. Families other than `ba` and `er` sample from a
/// base graph supplied alongside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SynthSpec {
    Ba { nodes: usize, m: usize },
    Er { nodes: usize, p: f64 },
    Ego { target_nodes: usize, band: (f64, f64), max_attempts: usize },
    TopDegreeSample { nodes: usize },
    SamplePlusBa { test_count: usize, m: usize },
}

impl SynthSpec {
    pub fn family(&self) -> &'static str {
        match self {
            SynthSpec::Ba { .. } => "ba",
            SynthSpec::Er { .. } => "er",
            SynthSpec::Ego { .. } => "ego",
            SynthSpec::TopDegreeSample { .. } => "top_degree_sample",
            SynthSpec::SamplePlusBa { .. } => "sample_plus_ba",
        }
    }

    pub fn needs_base(&self) -> bool {
        !matches!(self, SynthSpec::Ba { .. } | SynthSpec::Er { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SynthSpec::Ba { nodes, m } if nodes < 2 || m < 1 || m >= nodes => {
                invalid(format!("ba: need nodes >= 2 and 1 <= m < nodes (nodes={nodes}, m={m})"))
            }
            SynthSpec::Er { nodes, p } if nodes < 2 || !(0.0..=1.0).contains(&p) => {
                invalid(format!("er: need nodes >= 2 and p in [0, 1] (nodes={nodes}, p={p})"))
            }
            SynthSpec::Ego { target_nodes, band, max_attempts }
                if target_nodes < 2 || !(band.0 > 0.0 && band.0 < 1.0 && band.1 > 1.0) || max_attempts == 0 =>
            {
                invalid("ego: need target >= 2, 0 < lower < 1 < upper and max_attempts >= 1")
            }
            SynthSpec::TopDegreeSample { nodes } if nodes < 2 => invalid("top_degree_sample: need nodes >= 2"),
            SynthSpec::SamplePlusBa { test_count, m } if test_count < 1 || m < 1 => {
                invalid("sample_plus_ba: need test_count >= 1 and m >= 1")
            }
            _ => Ok(()),
        }
    }

    pub fn generate(&self, base: Option<&Graph>, rng_seed: u64) -> Result<SynthOutput> {
        self.validate()?;
        let base_graph = || {
            base.ok_or_else(|| Error::InvalidArgument(format!("{} needs a base graph", self.family())))
        };
        let mut extra = serde_json::Map::new();
        let (graph, partition) = match *self {
            SynthSpec::Ba { nodes, m } => (barabasi_albert(nodes, m, rng_seed)?, None),
            SynthSpec::Er { nodes, p } => (erdos_renyi(nodes, p, rng_seed)?, None),
            SynthSpec::Ego { target_nodes, band, max_attempts } => {
                let s = ego_sample(base_graph()?, target_nodes, band, rng_seed, max_attempts)?;
                extra.insert("start".into(), s.start.into());
                extra.insert("hops".into(), s.hops.into());
                extra.insert("attempts".into(), s.attempts.into());
                (s.subgraph.graph, None)
            }
            SynthSpec::TopDegreeSample { nodes } => {
                let b = base_graph()?;
                extra.insert("base_average_degree".into(), b.average_degree().into());
                (top_degree_sample(b, nodes)?.graph, None)
            }
            SynthSpec::SamplePlusBa { test_count, m } => {
                let (g, p) = sample_plus_ba(base_graph()?, test_count, m, rng_seed)?;
                (g, Some(p))
            }
        };
        graph.check_invariants()?;
        let metadata = SynthMetadata {
            spec: self.clone(),
            seed: rng_seed,
            directed: graph.is_directed(),
            nodes: graph.num_nodes(),
            edges: graph.num_edges(),
            average_degree: graph.average_degree(),
            extra,
        };
        Ok(SynthOutput {
            graph,
            partition,
            metadata,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub graph: Graph,
    pub partition: Option<Partition>,
    pub metadata: SynthMetadata,
}

/// Provenance written next to generated graphs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthMetadata {
    pub spec: SynthSpec,
    pub seed: u64,
    pub directed: bool,
    pub nodes: usize,
    pub edges: usize,
    pub average_degree: f64,
    #[serde(default)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}
