//! Community detection (Leiden), hierarchy construction, category mapping and summaries.

pub mod categories;
pub mod hierarchy;
pub mod leiden;
pub mod summarize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::KnowledgeGraph;
use crate::numeric::Scalar;
use crate::taxonomy::Category;
pub use categories::{assign_categories, CommunitySet};
pub use hierarchy::{hierarchical_leiden, Hierarchy, HierarchyNode};
pub use leiden::leiden;
pub use summarize::summarize;

#[derive(Debug, Error)]
pub enum CommunityError {
    #[error("invalid leiden configuration: {0}")]
    Config(String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("summary generation failed for community {community_id}: {source}")]
    Summarize {
        community_id: usize,
        #[source]
        source: crate::clients::ClientError,
    },
    #[error(transparent)]
    Graph(#[from] crate::kg::KgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct LeidenConfig<F> {
    pub resolution: F,
    pub max_iterations: usize,
    pub min_gain_epsilon: F,
    pub rng_seed: u64,
}

impl<F: Scalar> Default for LeidenConfig<F> {
    fn default() -> Self {
        Self { resolution: F::one(), max_iterations: 50, min_gain_epsilon: F::lit(1e-7), rng_seed: 42 }
    }
}

impl<F: Scalar> LeidenConfig<F> {
    pub fn validate(&self) -> Result<(), CommunityError> {
        if !(self.resolution > F::zero() && self.resolution.is_finite()) {
            return Err(CommunityError::Config(format!("resolution must be positive, got {}", self.resolution)));
        }
        if !(self.min_gain_epsilon > F::zero() && self.min_gain_epsilon.is_finite()) {
            return Err(CommunityError::Config(format!(
                "min_gain_epsilon must be positive, got {}",
                self.min_gain_epsilon
            )));
        }
        if self.max_iterations == 0 {
            return Err(CommunityError::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Undirected weighted graph in adjacency-list form. Self-loops are kept
/// apart; a self-loop of weight `w` adds `2w` to the node degree.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph<F> {
    adj: Vec<Vec<(usize, F)>>,
    self_loops: Vec<F>,
    degrees: Vec<F>,
    two_m: F,
}

impl<F: Scalar> WeightedGraph<F> {
    /// Parallel edges are merged by summing weights.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, F)>) -> Self {
        let mut adj: Vec<Vec<(usize, F)>> = vec![Vec::new(); n];
        let mut self_loops = vec![F::zero(); n];
        for (u, v, w) in edges {
            assert!(u < n && v < n, "edge ({u},{v}) outside node range {n}");
            if u == v {
                self_loops[u] += w;
            } else {
                adj[u].push((v, w));
                adj[v].push((u, w));
            }
        }
        for list in &mut adj {
            list.sort_by_key(|&(v, _)| v);
            let mut merged: Vec<(usize, F)> = Vec::with_capacity(list.len());
            for &(v, w) in list.iter() {
                match merged.last_mut() {
                    Some((lv, lw)) if *lv == v => *lw += w,
                    _ => merged.push((v, w)),
                }
            }
            *list = merged;
        }
        let degrees: Vec<F> = adj
            .iter()
            .zip(&self_loops)
            .map(|(l, &s)| l.iter().map(|&(_, w)| w).sum::<F>() + s + s)
            .collect();
        let two_m = degrees.iter().copied().sum();
        Self { adj, self_loops, degrees, two_m }
    }

    pub fn from_knowledge_graph(g: &KnowledgeGraph) -> Self {
        Self::from_edges(g.len(), g.relations().iter().map(|r| (r.src, r.dst, F::lit(r.weight))))
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, F)] {
        &self.adj[v]
    }

    pub fn self_loop(&self, v: usize) -> F {
        self.self_loops[v]
    }

    pub fn degree(&self, v: usize) -> F {
        self.degrees[v]
    }

    /// `2m`: the sum of all degrees.
    pub fn total_weight(&self) -> F {
        self.two_m
    }

    /// Subgraph on `nodes`; node `i` of the result is `nodes[i]`.
    pub fn induced(&self, nodes: &[usize]) -> WeightedGraph<F> {
        let mut local = vec![usize::MAX; self.node_count()];
        for (i, &v) in nodes.iter().enumerate() {
            local[v] = i;
        }
        let mut edges = Vec::new();
        for (i, &v) in nodes.iter().enumerate() {
            if self.self_loops[v] > F::zero() {
                edges.push((i, i, self.self_loops[v]));
            }
            for &(u, w) in &self.adj[v] {
                let j = local[u];
                if j != usize::MAX && i < j {
                    edges.push((i, j, w));
                }
            }
        }
        WeightedGraph::from_edges(nodes.len(), edges)
    }

    /// Whether `nodes` induce a connected subgraph. The empty set is not connected.
    pub fn is_connected_subset(&self, nodes: &[usize]) -> bool {
        if nodes.is_empty() {
            return false;
        }
        let mut inside = vec![false; self.node_count()];
        for &v in nodes {
            inside[v] = true;
        }
        let mut seen = vec![false; self.node_count()];
        let mut stack = vec![nodes[0]];
        seen[nodes[0]] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &(u, _) in &self.adj[v] {
                if inside[u] && !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == nodes.len()
    }
}

/// Community assignment with cached per-community sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Partition<F> {
    pub assignment: Vec<usize>,
    /// Internal weight counted over ordered pairs (twice the internal edge weight).
    pub sigma_in: Vec<F>,
    pub sigma_tot: Vec<F>,
    pub modularity: F,
}

impl<F: Scalar> Partition<F> {
    /// Relabels communities densely in order of first appearance and fills the caches.
    pub fn from_assignment(g: &WeightedGraph<F>, assignment: &[usize], resolution: F) -> Self {
        assert_eq!(assignment.len(), g.node_count(), "assignment length must match node count");
        let mut relabel = std::collections::HashMap::new();
        let dense: Vec<usize> = assignment
            .iter()
            .map(|&c| {
                let next = relabel.len();
                *relabel.entry(c).or_insert(next)
            })
            .collect();
        let k = relabel.len();
        let (sigma_in, sigma_tot) = community_sums(g, &dense, k);
        let modularity = modularity_from_sums(g.total_weight(), &sigma_in, &sigma_tot, resolution);
        Self { assignment: dense, sigma_in, sigma_tot, modularity }
    }

    pub fn community_count(&self) -> usize {
        self.sigma_tot.len()
    }

    /// Members of each community, ascending.
    pub fn communities(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.community_count()];
        for (v, &c) in self.assignment.iter().enumerate() {
            out[c].push(v);
        }
        out
    }
}

fn community_sums<F: Scalar>(g: &WeightedGraph<F>, assignment: &[usize], k: usize) -> (Vec<F>, Vec<F>) {
    let mut sigma_in = vec![F::zero(); k];
    let mut sigma_tot = vec![F::zero(); k];
    for (v, &c) in assignment.iter().enumerate() {
        sigma_tot[c] += g.degree(v);
        sigma_in[c] += g.self_loop(v) + g.self_loop(v);
        for &(u, w) in g.neighbors(v) {
            if assignment[u] == c {
                sigma_in[c] += w;
            }
        }
    }
    (sigma_in, sigma_tot)
}

fn modularity_from_sums<F: Scalar>(two_m: F, sigma_in: &[F], sigma_tot: &[F], resolution: F) -> F {
    if two_m <= F::zero() {
        return F::zero();
    }
    sigma_in
        .iter()
        .zip(sigma_tot)
        .map(|(&si, &st)| si / two_m - resolution * (st / two_m) * (st / two_m))
        .sum()
}

/// `Q = sum_c [ Σ_in/2m − γ (Σ_tot/2m)² ]`. Zero for an edgeless graph.
pub fn modularity<F: Scalar>(g: &WeightedGraph<F>, assignment: &[usize], resolution: F) -> F {
    Partition::from_assignment(g, assignment, resolution).modularity
}

/// Weight from `v` into community `c` (excluding `v` itself).
pub fn weight_to_community<F: Scalar>(g: &WeightedGraph<F>, assignment: &[usize], v: usize, c: usize) -> F {
    g.neighbors(v).iter().filter(|&&(u, _)| assignment[u] == c).map(|&(_, w)| w).sum()
}

/// The insertion score `(Σ_in + k_v,in)/2m − γ (Σ_tot + k_v) k_v / (2m)²` from the raw terms.
pub fn modularity_gain_terms<F: Scalar>(k_v_in: F, sigma_in: F, sigma_tot: F, k_v: F, two_m: F, resolution: F) -> F {
    (sigma_in + k_v_in) / two_m - resolution * (sigma_tot + k_v) * k_v / (two_m * two_m)
}

/// Insertion score of `node` into `target`, evaluated against the graph's
/// cached `2m`, `k_v` and the target's `Σ_in`, `Σ_tot`. If `node` already sits
/// in `target` its own contribution is removed from the sums first.
pub fn modularity_gain<F: Scalar>(
    g: &WeightedGraph<F>,
    partition: &Partition<F>,
    node: usize,
    target: usize,
    config: &LeidenConfig<F>,
) -> F {
    let k_v = g.degree(node);
    let k_v_in = weight_to_community(g, &partition.assignment, node, target);
    let (mut si, mut st) = match (partition.sigma_in.get(target), partition.sigma_tot.get(target)) {
        (Some(&a), Some(&b)) => (a, b),
        _ => (F::zero(), F::zero()),
    };
    if partition.assignment[node] == target {
        st -= k_v;
        si -= k_v_in + k_v_in + g.self_loop(node) + g.self_loop(node);
    }
    modularity_gain_terms(k_v_in, si, st, k_v, g.total_weight(), config.resolution)
}

/// Exact change in `Q` when a node sitting alone joins community `c` (sums
/// exclude the node): `2 [k_v,c/2m − γ Σ_tot,c k_v/(2m)²]`.
pub fn insertion_delta<F: Scalar>(k_v_c: F, sigma_tot_c: F, k_v: F, two_m: F, resolution: F) -> F {
    let two = F::lit(2.0);
    two * (k_v_c / two_m - resolution * sigma_tot_c * k_v / (two_m * two_m))
}

/// Exact modularity change of moving `node` from its community to `target`.
pub fn move_delta<F: Scalar>(
    g: &WeightedGraph<F>,
    partition: &Partition<F>,
    node: usize,
    target: usize,
    resolution: F,
) -> F {
    let from = partition.assignment[node];
    if from == target {
        return F::zero();
    }
    let two_m = g.total_weight();
    if two_m <= F::zero() {
        return F::zero();
    }
    let k_v = g.degree(node);
    let k_from = weight_to_community(g, &partition.assignment, node, from);
    let k_to = weight_to_community(g, &partition.assignment, node, target);
    let st_from = partition.sigma_tot[from] - k_v;
    let st_to = partition.sigma_tot.get(target).copied().unwrap_or(F::zero());
    insertion_delta(k_to, st_to, k_v, two_m, resolution) - insertion_delta(k_from, st_from, k_v, two_m, resolution)
}

/// A detected community at some level of the hierarchy, or a category-level group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Community {
    pub community_id: usize,
    pub entity_ids: std::collections::BTreeSet<usize>,
    pub category: Category,
    pub description: String,
    pub level: usize,
}
