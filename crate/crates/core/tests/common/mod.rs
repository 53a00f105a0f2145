//! Slow, literal reference implementations used to check the real ones.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use syncnet::actions::{ActionEvent, ActionType};
use syncnet::network::{MultiViewNetwork, ViewGraph};
use syncnet::window::{TieBreak, WindowConfig};

pub type PairWeights = BTreeMap<(String, String), f64>;

fn key(a: &str, b: &str) -> (String, String) {
    if a < b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Every anchor, every window member, checked one by one. O(N²).
pub fn brute_sliding(group: &[ActionEvent], config: &WindowConfig) -> PairWeights {
    let t = config.window_seconds as i64;
    let inc = if config.popularity_downweight {
        1.0 / (1.0 + group.len() as f64).log2()
    } else {
        1.0
    };
    let mut out = PairWeights::new();
    for anchor in group {
        let u = &*anchor.user_id;
        let window: Vec<&ActionEvent> = group
            .iter()
            .filter(|e| e.timestamp >= anchor.timestamp && e.timestamp <= anchor.timestamp + t)
            .collect();
        let mut presence: BTreeMap<&str, usize> = BTreeMap::new();
        let mut earliest: BTreeMap<&str, i64> = BTreeMap::new();
        for e in &window {
            *presence.entry(&e.user_id).or_default() += 1;
            let slot = earliest.entry(&e.user_id).or_insert(e.timestamp);
            *slot = (*slot).min(e.timestamp);
        }
        for (&v, &pv) in &presence {
            if v == u {
                continue;
            }
            let pu = presence[u];
            let draw = if pu != pv {
                pu < pv
            } else {
                match config.tie_break {
                    TieBreak::EarliestAnchor => {
                        let (eu, ev) = (earliest[u], earliest[v]);
                        eu < ev || (eu == ev && u < v)
                    }
                    TieBreak::SmallerUserId => u < v,
                }
            };
            if draw {
                *out.entry(key(u, v)).or_insert(0.0) += inc;
            }
        }
    }
    out
}

/// Bins of width t from the group's first timestamp; min count per bin.
pub fn brute_fixed(group: &[ActionEvent], config: &WindowConfig) -> PairWeights {
    let t = config.window_seconds as i64;
    let inc = if config.popularity_downweight {
        1.0 / (1.0 + group.len() as f64).log2()
    } else {
        1.0
    };
    let Some(origin) = group.iter().map(|e| e.timestamp).min() else {
        return PairWeights::new();
    };
    let mut bins: BTreeMap<i64, BTreeMap<&str, usize>> = BTreeMap::new();
    for e in group {
        *bins.entry((e.timestamp - origin) / t).or_default().entry(&e.user_id).or_default() += 1;
    }
    let mut out = PairWeights::new();
    for counts in bins.values() {
        let users: Vec<(&str, usize)> = counts.iter().map(|(u, c)| (*u, *c)).collect();
        for i in 0..users.len() {
            for j in i + 1..users.len() {
                *out.entry(key(users[i].0, users[j].0)).or_insert(0.0) += inc * users[i].1.min(users[j].1) as f64;
            }
        }
    }
    out
}

pub fn accumulator_weights(acc: &syncnet::EdgeAccumulator) -> PairWeights {
    acc.iter().map(|(p, w)| ((p.lo().to_string(), p.hi().to_string()), w)).collect()
}

/// Random group for one action key, sorted as `group_by_action` would.
pub fn random_group<R: Rng>(rng: &mut R, max_len: usize, users: usize, span: i64) -> Vec<ActionEvent> {
    let n = rng.gen_range(1..=max_len);
    let mut events: Vec<ActionEvent> = (0..n)
        .map(|i| {
            let u = format!("u{}", rng.gen_range(0..users));
            ActionEvent::new(&u, rng.gen_range(0..=span), "k", &format!("t{i:05}"))
        })
        .collect();
    events.sort_by(|a, b| (a.timestamp, &a.tweet_id).cmp(&(b.timestamp, &b.tweet_id)));
    events
}

/// Dense symmetric weight matrix over the sorted node names.
pub fn dense(view: &ViewGraph) -> (Vec<String>, DMatrix<f64>) {
    let names: Vec<String> = view.nodes().iter().map(|n| n.to_string()).collect();
    let pos: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut a = DMatrix::zeros(names.len(), names.len());
    for (pair, &w) in view.edges() {
        let (i, j) = (pos[pair.lo()], pos[pair.hi()]);
        a[(i, j)] += w;
        a[(j, i)] += w;
    }
    (names, a)
}

/// `1/2m Σ_ij [A_ij − γ k_i k_j / 2m] δ(c_i, c_j)`.
pub fn modularity_double_loop(a: &DMatrix<f64>, labels: &[usize], gamma: f64) -> f64 {
    let n = a.nrows();
    let k: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    let two_m: f64 = k.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += a[(i, j)] - gamma * k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// `Q(G) − Q(G − node)` by recomputing both from scratch.
pub fn vitality_from_scratch(a: &DMatrix<f64>, labels: &[usize], node: usize) -> f64 {
    let keep: Vec<usize> = (0..a.nrows()).filter(|&i| i != node).collect();
    let sub = DMatrix::from_fn(keep.len(), keep.len(), |i, j| a[(keep[i], keep[j])]);
    let sub_labels: Vec<usize> = keep.iter().map(|&i| labels[i]).collect();
    modularity_double_loop(a, labels, 1.0) - modularity_double_loop(&sub, &sub_labels, 1.0)
}

/// Sum of all views as one dense matrix over the network's node order.
pub fn dense_aggregate(network: &MultiViewNetwork) -> DMatrix<f64> {
    let n = network.node_count();
    let mut a = DMatrix::zeros(n, n);
    for view in network.views() {
        for (pair, &w) in view.edges() {
            let i = network.nodes().get(pair.lo()).unwrap();
            let j = network.nodes().get(pair.hi()).unwrap();
            a[(i, j)] += w;
            a[(j, i)] += w;
        }
    }
    a
}

/// Leading eigenvector (non-negative, unit norm) of a connected graph.
pub fn dense_eigenvector(a: &DMatrix<f64>) -> Vec<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let top = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(top);
    let sign = if v.sum() < 0.0 { -1.0 } else { 1.0 };
    let norm = v.norm();
    v.iter().map(|x| sign * x / norm).collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Random undirected graph on `n` nodes named `n00..`.
pub fn random_view<R: Rng>(rng: &mut R, kind: ActionType, n: usize, p: f64, integer: bool) -> ViewGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                let w = if integer { rng.gen_range(1..=5) as f64 } else { rng.gen_range(0.1..5.0) };
                edges.push((format!("n{i:02}"), format!("n{j:02}"), w));
            }
        }
    }
    ViewGraph::from_edges(kind, edges)
}

/// Random connected graph: a random spanning tree plus extra edges.
pub fn random_connected_view<R: Rng>(rng: &mut R, kind: ActionType, n: usize, p: f64) -> ViewGraph {
    let mut edges = Vec::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        edges.push((format!("n{j:02}"), format!("n{i:02}"), rng.gen_range(1..=4) as f64));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push((format!("n{i:02}"), format!("n{j:02}"), rng.gen_range(1..=4) as f64));
            }
        }
    }
    ViewGraph::from_edges(kind, edges)
}

/// Users within `radius` hops of `start` in the union of all views.
pub fn bfs_ball(network: &MultiViewNetwork, start: &str, radius: u32) -> BTreeSet<String> {
    let mut neighbors: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for view in network.views() {
        for pair in view.edges().keys() {
            neighbors.entry(pair.lo().into()).or_default().insert(pair.hi().into());
            neighbors.entry(pair.hi().into()).or_default().insert(pair.lo().into());
        }
    }
    let mut seen = BTreeSet::from([start.to_string()]);
    let mut queue = VecDeque::from([(start.to_string(), 0u32)]);
    while let Some((u, d)) = queue.pop_front() {
        if d == radius {
            continue;
        }
        for v in neighbors.get(&u).into_iter().flatten() {
            if seen.insert(v.clone()) {
                queue.push_back((v.clone(), d + 1));
            }
        }
    }
    seen
}

/// Planted-campaign recovery: precision and recall of the densest cluster
/// against the campaign it overlaps most.
pub fn precision_recall(found: &BTreeSet<String>, planted: &[BTreeSet<String>]) -> (f64, f64) {
    let best = planted
        .iter()
        .max_by_key(|p| p.intersection(found).count())
        .expect("at least one planted group");
    let hit = best.intersection(found).count() as f64;
    (hit / found.len() as f64, hit / best.len() as f64)
}
