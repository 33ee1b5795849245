//! Randomized invariants over generators, sampling, metrics and the model.

use std::collections::HashSet;

use nodepred::eval::{hits_and_mrr, rank_positive};
use nodepred::examples::{generate_test_examples, generate_train_examples, pure_spurious_bounds};
use nodepred::graph::{generate_negative_graph, split_nodes, NegativeScope};
use nodepred::io;
use nodepred::model::{embed_example, random_features, Adjacency};
use nodepred::synth::{barabasi_albert, erdos_renyi};
use nodepred::{CountStrategy, Example, GnnConfig, Graph, LayerKind, NodePredictor, Purity};
use proptest::prelude::*;

fn purity_strategy() -> impl Strategy<Value = Purity> {
    (0u32..=100, 0u32..=100).prop_map(|(a, b)| Purity::new(a as f64, b as f64).unwrap())
}

fn graph_strategy() -> impl Strategy<Value = Graph> {
    prop_oneof![
        (5usize..60, 0.02f64..0.4, any::<u64>(), any::<bool>()).prop_map(|(n, p, s, directed)| {
            let g = erdos_renyi(n, p, s).unwrap();
            if directed {
                // Orient each undirected edge by a seeded coin, keeping both sometimes.
                let mut edges = Vec::new();
                for (i, &(u, v)) in g.edges().iter().enumerate() {
                    match (s.wrapping_add(i as u64 * 0x9E37)) % 3 {
                        0 => edges.push((u, v)),
                        1 => edges.push((v, u)),
                        _ => {
                            edges.push((u, v));
                            edges.push((v, u));
                        }
                    }
                }
                Graph::new(n, true, edges).unwrap()
            } else {
                g
            }
        }),
        (6usize..80, 1usize..4, any::<u64>()).prop_map(|(n, m, s)| barabasi_albert(n, m.min(n - 1), s).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn examples_respect_purity_and_polarity(
        g in graph_strategy(),
        purity in purity_strategy(),
        extreme in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let strategy = if extreme { CountStrategy::Extreme } else { CountStrategy::Uniform };
        let all: Vec<usize> = (0..g.num_nodes()).collect();
        let Ok(neg) = generate_negative_graph(&g, &all, None, NegativeScope::TrainOnly, seed) else {
            return Ok(());
        };
        let Ok(set) = generate_train_examples(&g, &neg, purity, strategy, seed ^ 1) else {
            return Ok(());
        };
        for ex in &set.examples {
            let (pure_pool, spur_pool) = if ex.is_positive() {
                (g.in_neighbors(ex.target), neg.graph().in_neighbors(ex.target))
            } else {
                (neg.graph().in_neighbors(ex.target), g.in_neighbors(ex.target))
            };
            let (min_pure, max_spur) = pure_spurious_bounds(purity, pure_pool.len(), spur_pool.len());
            let pure = ex.members.iter().filter(|m| pure_pool.contains(m)).count();
            let spur = ex.members.iter().filter(|m| spur_pool.contains(m)).count();
            prop_assert_eq!(pure + spur, ex.members.len());
            prop_assert_eq!(pure, ex.pure_count);
            prop_assert_eq!(spur, ex.spurious_count);
            prop_assert!(pure >= min_pure.max(1));
            prop_assert!(spur <= max_spur);
            prop_assert!(!ex.members.contains(&ex.target));
            prop_assert!(ex.members.windows(2).all(|w| w[0] < w[1]));
            if extreme {
                prop_assert_eq!(pure, min_pure.max(1));
                prop_assert_eq!(spur, max_spur);
            }
        }
        let targets_with_pos: HashSet<usize> = set.positives().map(|e| e.target).collect();
        prop_assert_eq!(targets_with_pos.len() + set.skipped_positive, g.num_nodes());
    }

    #[test]
    fn bounds_match_real_arithmetic(n_pure in 0usize..500, n_spur in 0usize..500, purity in purity_strategy()) {
        let (lo, hi) = pure_spurious_bounds(purity, n_pure, n_spur);
        // Purities are integers here, so integer arithmetic is an exact oracle.
        let a = purity.min_pure as usize;
        let b = purity.max_spurious as usize;
        prop_assert_eq!(lo, (n_pure * a).div_ceil(100));
        prop_assert_eq!(hi, n_spur * b / 100);
        prop_assert!(lo <= n_pure && hi <= n_spur);
    }

    #[test]
    fn negative_graphs_avoid_positive_edges(
        g in graph_strategy(),
        seed in any::<u64>(),
        request in proptest::option::of(0usize..400),
        scope_frac in 0.3f64..1.0,
    ) {
        let n = g.num_nodes();
        let k = ((n as f64 * scope_frac).ceil() as usize).clamp(1, n);
        let scope: Vec<usize> = (0..k).collect();
        let neg = generate_negative_graph(&g, &scope, request, NegativeScope::TrainOnly, seed).unwrap();
        let mut seen = HashSet::new();
        for &(u, v) in neg.edges() {
            prop_assert!(u != v);
            prop_assert!(u < k && v < k);
            prop_assert!(!g.has_edge(u, v));
            let key = if g.is_directed() { (u, v) } else { (u.min(v), u.max(v)) };
            prop_assert!(seen.insert(key), "duplicate negative edge {:?}", key);
        }
        prop_assert_eq!(neg.num_edges(), neg.requested().min(neg.available()));
        prop_assert_eq!(neg.clamped(), neg.requested() > neg.available());
        prop_assert_eq!(neg.graph().is_directed(), g.is_directed());
    }

    #[test]
    fn metrics_equal_the_sort_oracle(
        pos in proptest::collection::vec(0u8..20, 1..30),
        neg in proptest::collection::vec(0u8..20, 1..40),
    ) {
        // Small integer scores force many ties.
        let pos: Vec<f64> = pos.into_iter().map(f64::from).collect();
        let neg: Vec<f64> = neg.into_iter().map(f64::from).collect();
        let ks = [1usize, 2, 3, 5, 10, 20, 30, 50];
        let (hits, mrr) = hits_and_mrr(&pos, &neg, &ks).unwrap();
        let oracle = sort_oracle(&pos, &neg);
        for &k in &ks {
            let expect = oracle.iter().filter(|&&r| r <= k).count() as f64 / pos.len() as f64;
            prop_assert_eq!(hits[&k], expect);
        }
        let expect_mrr = oracle.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / pos.len() as f64;
        prop_assert!((mrr - expect_mrr).abs() <= 1e-12);
        for w in ks.windows(2) {
            prop_assert!(hits[&w[0]] <= hits[&w[1]]);
        }
        prop_assert!(mrr > 0.0 && mrr <= 1.0);
    }

    #[test]
    fn metrics_reject_empty_sides(pos in proptest::collection::vec(0.0f64..1.0, 0..4)) {
        prop_assert!(hits_and_mrr(&pos, &[], &[1]).is_err());
        prop_assert!(hits_and_mrr(&[], &pos, &[1]).is_err());
    }

    #[test]
    fn ranks_survive_monotone_rescaling(
        pos in -5.0f64..5.0,
        neg in proptest::collection::vec(-5.0f64..5.0, 0..50),
        scale in 0.1f64..10.0,
        shift in -3.0f64..3.0,
    ) {
        let r = rank_positive(pos, &neg);
        let f = |x: f64| (x * scale + shift).tanh();
        let neg2: Vec<f64> = neg.iter().map(|&x| f(x)).collect();
        // tanh can merge values that were distinct; it only ever adds ties.
        let r2 = rank_positive(f(pos), &neg2);
        prop_assert!(r2 >= r);
        // Power-of-two scaling is exact, so the order is unchanged.
        let two_k = 2f64.powi(scale.log2().round() as i32);
        let neg3: Vec<f64> = neg.iter().map(|&x| x * two_k).collect();
        prop_assert_eq!(rank_positive(pos * two_k, &neg3), r);
    }

    #[test]
    fn example_embedding_ignores_member_order(
        members in proptest::collection::vec(1usize..30, 1..12),
        seed in any::<u64>(),
    ) {
        let emb = random_features(30, 6, seed);
        let mut sorted = members.clone();
        sorted.sort_unstable();
        sorted.dedup();
        let mut reversed = sorted.clone();
        reversed.reverse();
        let a = embed_example(&emb, &example(sorted, 0)).unwrap();
        let b = embed_example(&emb, &example(reversed, 0)).unwrap();
        prop_assert_eq!(a.len(), 12);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        prop_assert_eq!(&a[6..], emb.row(0));
    }

    #[test]
    fn splits_are_partitions(n in 2usize..300, frac in 0.05f64..0.95, seed in any::<u64>()) {
        let g = Graph::new(n, false, Vec::<(usize, usize)>::new()).unwrap();
        let n_test = (frac * n as f64).round() as usize;
        let Ok(p) = split_nodes(&g, frac, seed) else {
            prop_assert!(n_test == 0 || n_test == n);
            return Ok(());
        };
        prop_assert_eq!(p.test_nodes().len(), n_test);
        prop_assert_eq!(p.train_nodes().len() + p.test_nodes().len(), n);
        prop_assert!(!p.train_nodes().is_empty() && !p.test_nodes().is_empty());
        let mut all: Vec<usize> = p.train_nodes().iter().chain(p.test_nodes()).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn edge_lists_round_trip(g in graph_strategy()) {
        let back = io::parse_edge_list(&io::format_edge_list(&g)).unwrap();
        prop_assert_eq!(back.num_nodes(), g.num_nodes());
        prop_assert_eq!(back.is_directed(), g.is_directed());
        prop_assert_eq!(back.edges(), g.edges());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gnn_embeddings_are_permutation_equivariant(
        g in graph_strategy(),
        sage in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let n = g.num_nodes();
        let kind = if sage { LayerKind::Sage } else { LayerKind::Gcn };
        let model = NodePredictor::new(GnnConfig::with_dims(kind, 5, 3, 8), seed).unwrap();
        let x = random_features(n, 5, seed ^ 7);
        // perm[old] = new
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let perm = if is_permutation(&perm) { perm } else { (0..n).rev().collect() };
        let edges: Vec<(usize, usize)> = g.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let g2 = Graph::new(n, g.is_directed(), edges).unwrap();
        let mut x2 = nodepred::Matrix::zeros(n, 5);
        for old in 0..n {
            x2.row_mut(perm[old]).copy_from_slice(x.row(old));
        }
        let h = model.embed(&Adjacency::from_graph(&g), &x).unwrap();
        let h2 = model.embed(&Adjacency::from_graph(&g2), &x2).unwrap();
        for old in 0..n {
            for (a, b) in h.row(old).iter().zip(h2.row(perm[old])) {
                prop_assert!((a - b).abs() <= 1e-10, "node {}: {} vs {}", old, a, b);
            }
        }
    }

    #[test]
    fn test_examples_target_only_test_nodes(g in graph_strategy(), seed in any::<u64>(), purity in purity_strategy()) {
        let n = g.num_nodes();
        let p = split_nodes(&g, 0.2, seed).unwrap();
        let all: Vec<usize> = (0..n).collect();
        let neg = generate_negative_graph(&g, &all, None, NegativeScope::WholeGraph, seed ^ 3).unwrap();
        let Ok(set) = generate_test_examples(&g, &neg, &p, purity, CountStrategy::Uniform, seed ^ 5) else {
            return Ok(());
        };
        for ex in &set.examples {
            prop_assert!(p.is_test(ex.target));
            let pool = if ex.is_positive() { g.in_neighbors(ex.target) } else { neg.graph().in_neighbors(ex.target) };
            prop_assert!(ex.members.iter().filter(|m| pool.contains(m)).count() >= 1);
        }
        let per_target: HashSet<(usize, u8)> = set.examples.iter().map(|e| (e.target, e.label)).collect();
        prop_assert_eq!(per_target.len(), set.examples.len());
    }
}

fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    for &i in p {
        if i >= p.len() || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

fn example(members: Vec<usize>, target: usize) -> Example {
    Example {
        pure_count: members.len(),
        members,
        target,
        label: 1,
        spurious_count: 0,
    }
}

/// 1-based rank of each positive after sorting it with every negative by
/// descending score, negatives first among ties.
fn sort_oracle(pos: &[f64], neg: &[f64]) -> Vec<usize> {
    pos.iter()
        .map(|&p| {
            let mut all: Vec<(f64, bool)> = neg.iter().map(|&s| (s, false)).collect();
            all.push((p, true));
            all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            all.iter().position(|&(_, is_pos)| is_pos).unwrap() + 1
        })
        .collect()
}
