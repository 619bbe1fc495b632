//! Leiden modularity optimisation: local moving, refinement, aggregation.
//!
//! After the multilevel loop the projected partition is polished on the
//! original graph: disconnected communities are split into components and
//! local moving is rerun until neither step changes anything. The whole run
//! is then repeated from its own result while modularity keeps improving, and
//! the best of several seeded restarts from random partitions is returned.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CommunityError, LeidenConfig, Partition, WeightedGraph};
use crate::numeric::Scalar;

const MAX_POLISH_ROUNDS: usize = 1000;
/// Independent runs; the best partition is kept.
const RESTARTS: usize = 16;

pub fn leiden<F: Scalar>(g: &WeightedGraph<F>, cfg: &LeidenConfig<F>) -> Result<Partition<F>, CommunityError> {
    cfg.validate()?;
    let n = g.node_count();
    if n == 0 {
        return Err(CommunityError::EmptyGraph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut best: Option<Partition<F>> = None;
    for restart in 0..RESTARTS {
        // The first run starts from singletons, later ones from random partitions.
        let initial: Vec<usize> = if restart == 0 {
            (0..n).collect()
        } else {
            let k = rng.gen_range(1..=n);
            (0..n).map(|_| rng.gen_range(0..k)).collect()
        };
        let mut cur = Partition::from_assignment(g, &multilevel(g, initial, cfg, &mut rng), cfg.resolution);
        // Rerun from the previous result until modularity stops improving.
        for _ in 1..cfg.max_iterations {
            let next = Partition::from_assignment(g, &multilevel(g, cur.assignment.clone(), cfg, &mut rng), cfg.resolution);
            if next.modularity - cur.modularity <= cfg.min_gain_epsilon {
                break;
            }
            cur = next;
        }
        if best.as_ref().is_none_or(|b| cur.modularity - b.modularity > cfg.min_gain_epsilon) {
            best = Some(cur);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// One multilevel run (move, refine, aggregate) from `initial`, followed by polishing.
fn multilevel<F: Scalar>(g: &WeightedGraph<F>, initial: Vec<usize>, cfg: &LeidenConfig<F>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = g.node_count();
    let gamma = cfg.resolution;
    let eps = cfg.min_gain_epsilon;
    let mut level = g.clone();
    let mut members: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
    let mut part: Vec<usize> = initial;

    for _ in 0..cfg.max_iterations {
        move_nodes(&level, &mut part, gamma, eps, rng);
        let (p_dense, k) = densify(&part);
        if k == level.node_count() {
            part = p_dense;
            break;
        }
        let refined = refine(&level, &p_dense, k, gamma, rng);
        let (refined, r) = densify(&refined);
        if r == level.node_count() {
            // Refinement merged nothing, so aggregating would not shrink the graph.
            part = p_dense;
            break;
        }
        let agg = aggregate(&level, &refined, r);
        let mut next_part = vec![0; r];
        let mut next_members: Vec<Vec<usize>> = vec![Vec::new(); r];
        for v in 0..level.node_count() {
            next_part[refined[v]] = p_dense[v];
            next_members[refined[v]].extend_from_slice(&members[v]);
        }
        level = agg;
        part = next_part;
        members = next_members;
    }

    let mut assignment = vec![0; n];
    for (a, ms) in members.iter().enumerate() {
        for &v in ms {
            assignment[v] = part[a];
        }
    }
    let (mut assignment, _) = densify(&assignment);
    for _ in 0..MAX_POLISH_ROUNDS {
        let moved = move_nodes(g, &mut assignment, gamma, eps, rng);
        let split = split_disconnected(g, &mut assignment);
        if !moved && !split {
            break;
        }
    }
    assignment
}

/// Relabels to `0..k` in order of first appearance.
fn densify(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = vec![usize::MAX; labels.iter().copied().max().map_or(0, |m| m + 1)];
    let mut next = 0;
    let out = labels
        .iter()
        .map(|&c| {
            if map[c] == usize::MAX {
                map[c] = next;
                next += 1;
            }
            map[c]
        })
        .collect();
    (out, next)
}

/// Queue-driven local moving. Labels in `part` must be `< node_count`.
/// Returns whether any node moved.
pub(crate) fn move_nodes<F: Scalar>(
    g: &WeightedGraph<F>,
    part: &mut [usize],
    gamma: F,
    eps: F,
    rng: &mut ChaCha8Rng,
) -> bool {
    let n = g.node_count();
    let two_m = g.total_weight();
    if two_m <= F::zero() {
        return false;
    }
    let mut tot = vec![F::zero(); n];
    let mut size = vec![0usize; n];
    for v in 0..n {
        tot[part[v]] += g.degree(v);
        size[part[v]] += 1;
    }
    let mut empty: Vec<usize> = (0..n).rev().filter(|&c| size[c] == 0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut queue: VecDeque<usize> = order.into();
    let mut queued = vec![true; n];
    let mut w_to = vec![F::zero(); n];
    let mut seen = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();
    let two = F::lit(2.0);
    let mut any = false;

    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        let k = g.degree(v);
        let old = part[v];
        for &(u, w) in g.neighbors(v) {
            let c = part[u];
            if !seen[c] {
                seen[c] = true;
                touched.push(c);
            }
            w_to[c] += w;
        }
        tot[old] -= k;
        let score = |c: usize, w: F, tot: &[F]| w - gamma * k * tot[c] / two_m;
        let stay = score(old, w_to[old], &tot);
        let mut best = old;
        let mut best_s = stay;
        for &c in &touched {
            if c != old {
                let s = score(c, w_to[c], &tot);
                if s > best_s {
                    best = c;
                    best_s = s;
                }
            }
        }
        if size[old] > 1 {
            if let Some(&e) = empty.last() {
                if F::zero() > best_s {
                    best = e;
                    best_s = F::zero();
                }
            }
        }
        if best != old && (best_s - stay) * two / two_m > eps {
            if empty.last() == Some(&best) {
                empty.pop();
            }
            part[v] = best;
            tot[best] += k;
            size[old] -= 1;
            size[best] += 1;
            if size[old] == 0 {
                empty.push(old);
            }
            any = true;
            for &(u, _) in g.neighbors(v) {
                if !queued[u] && part[u] != best {
                    queued[u] = true;
                    queue.push_back(u);
                }
            }
        } else {
            tot[old] += k;
        }
        for &c in &touched {
            seen[c] = false;
            w_to[c] = F::zero();
        }
        touched.clear();
    }
    any
}

/// Greedy refinement inside each community of `part`. Every node starts as its
/// own subset; a still-singleton, well-connected node joins the adjacent
/// well-connected subset of the same community with the largest positive gain.
fn refine<F: Scalar>(g: &WeightedGraph<F>, part: &[usize], k: usize, gamma: F, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = g.node_count();
    let two_m = g.total_weight();
    let mut refined: Vec<usize> = (0..n).collect();
    if two_m <= F::zero() {
        return refined;
    }
    let mut p_tot = vec![F::zero(); k];
    for v in 0..n {
        p_tot[part[v]] += g.degree(v);
    }
    let mut r_tot: Vec<F> = (0..n).map(|v| g.degree(v)).collect();
    // Weight from each subset to the rest of its community.
    let mut ext: Vec<F> = (0..n)
        .map(|v| g.neighbors(v).iter().filter(|&&(u, _)| part[u] == part[v]).map(|&(_, w)| w).sum())
        .collect();
    let mut singleton = vec![true; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut w_to = vec![F::zero(); n];
    let mut seen = vec![false; n];
    let mut touched = Vec::new();

    for v in order {
        if !singleton[v] {
            continue;
        }
        let c = part[v];
        let kv = g.degree(v);
        if ext[v] < gamma * kv * (p_tot[c] - kv) / two_m {
            continue;
        }
        for &(u, w) in g.neighbors(v) {
            if part[u] == c {
                let r = refined[u];
                if !seen[r] {
                    seen[r] = true;
                    touched.push(r);
                }
                w_to[r] += w;
            }
        }
        let mut best: Option<usize> = None;
        let mut best_gain = F::zero();
        for &r in &touched {
            if ext[r] < gamma * r_tot[r] * (p_tot[c] - r_tot[r]) / two_m {
                continue;
            }
            let gain = w_to[r] - gamma * kv * r_tot[r] / two_m;
            if gain > best_gain {
                best = Some(r);
                best_gain = gain;
            }
        }
        if let Some(r) = best {
            refined[v] = r;
            r_tot[r] += kv;
            ext[r] = ext[r] + ext[v] - w_to[r] - w_to[r];
            singleton[v] = false;
            singleton[r] = false;
        }
        for &r in &touched {
            seen[r] = false;
            w_to[r] = F::zero();
        }
        touched.clear();
    }
    refined
}

/// Collapses each refined subset into one node; internal weight becomes a self-loop.
fn aggregate<F: Scalar>(g: &WeightedGraph<F>, refined: &[usize], r: usize) -> WeightedGraph<F> {
    let mut edges = Vec::new();
    for v in 0..g.node_count() {
        if g.self_loop(v) > F::zero() {
            edges.push((refined[v], refined[v], g.self_loop(v)));
        }
        for &(u, w) in g.neighbors(v) {
            if v < u {
                edges.push((refined[v], refined[u], w));
            }
        }
    }
    WeightedGraph::from_edges(r, edges)
}

/// Splits every community into its connected components. Returns whether anything split.
pub(crate) fn split_disconnected<F: Scalar>(g: &WeightedGraph<F>, assignment: &mut [usize]) -> bool {
    let n = g.node_count();
    let before = assignment.iter().copied().max().map_or(0, |m| m + 1);
    let before_count = {
        let mut present = vec![false; before];
        for &c in assignment.iter() {
            present[c] = true;
        }
        present.iter().filter(|&&p| p).count()
    };
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &(u, _) in g.neighbors(v) {
                if comp[u] == usize::MAX && assignment[u] == assignment[v] {
                    comp[u] = next;
                    stack.push(u);
                }
            }
        }
        next += 1;
    }
    assignment.copy_from_slice(&comp);
    next > before_count
}
