//! Leiden against exhaustive enumeration on small weighted graphs.

use proptest::prelude::*;
use zfdt::community::{leiden, modularity, LeidenConfig, WeightedGraph};

/// Connected graph: a random spanning tree plus optional extra edges.
fn graph() -> impl Strategy<Value = WeightedGraph<f64>> {
    (2usize..=7).prop_flat_map(|n| {
        let tree = proptest::collection::vec((0.0f64..1.0, 0.5f64..3.0), n - 1);
        let extra = proptest::collection::vec(proptest::option::of(0.5f64..3.0), n * (n - 1) / 2);
        (Just(n), tree, extra).prop_map(|(n, tree, extra)| {
            let mut edges = Vec::new();
            let mut present = std::collections::BTreeSet::new();
            for (i, (r, w)) in tree.into_iter().enumerate() {
                let v = i + 1;
                let u = ((r * v as f64) as usize).min(v - 1);
                edges.push((u, v, w));
                present.insert((u, v));
            }
            let mut k = 0;
            for u in 0..n {
                for v in u + 1..n {
                    if let Some(w) = extra[k] {
                        if !present.contains(&(u, v)) {
                            edges.push((u, v, w));
                        }
                    }
                    k += 1;
                }
            }
            WeightedGraph::from_edges(n, edges)
        })
    })
}

fn optimum(g: &WeightedGraph<f64>) -> f64 {
    fn rec(g: &WeightedGraph<f64>, a: &mut Vec<usize>, next: usize, best: &mut f64) {
        if a.len() == g.node_count() {
            *best = best.max(modularity(g, a, 1.0));
            return;
        }
        for c in 0..=next {
            a.push(c);
            rec(g, a, if c == next { next + 1 } else { next }, best);
            a.pop();
        }
    }
    let mut best = f64::NEG_INFINITY;
    rec(g, &mut Vec::new(), 0, &mut best);
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn near_optimal_and_connected(g in graph(), seed in 0u64..1000) {
        let cfg = LeidenConfig { rng_seed: seed, ..LeidenConfig::default() };
        let p = leiden(&g, &cfg).unwrap();
        prop_assert!(p.modularity >= 0.95 * optimum(&g) - 1e-12);
        for c in p.communities() {
            prop_assert!(g.is_connected_subset(&c));
        }
        prop_assert!((p.modularity - modularity(&g, &p.assignment, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_partition(g in graph(), seed in 0u64..1000) {
        let cfg = LeidenConfig { rng_seed: seed, ..LeidenConfig::default() };
        prop_assert_eq!(leiden(&g, &cfg).unwrap(), leiden(&g, &cfg).unwrap());
    }

    #[test]
    fn f32_agrees_with_f64(g in graph()) {
        let g32 = WeightedGraph::<f32>::from_edges(
            g.node_count(),
            (0..g.node_count()).flat_map(|v| g.neighbors(v).iter().filter(move |(u, _)| *u > v).map(move |&(u, w)| (v, u, w as f32)).collect::<Vec<_>>()),
        );
        let q64 = leiden(&g, &LeidenConfig::default()).unwrap().modularity;
        let q32 = leiden(&g32, &LeidenConfig::default()).unwrap().modularity;
        prop_assert!((q64 - q32 as f64).abs() < 1e-3 * q64.abs().max(1.0) + 0.05 * q64.abs());
    }
}
