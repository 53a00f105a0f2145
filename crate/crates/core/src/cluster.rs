//! Multi-view modularity clustering.
//!
//! The objective is a multislice modularity: every view contributes its own
//! Newman-Girvan modularity, normalized by that view's total weight, and a
//! user's copies in different views are tied together by coupling edges of
//! strength `ω`. Coupling is expressed in the same units as one unit-weight
//! edge, averaged over the two views it joins.
//!
//! Optimization is Louvain-style: greedy local moving in a seeded random
//! order, then aggregation of communities into super-nodes, repeated until
//! nothing moves. It runs first over per-view node copies, then the copies
//! are collapsed to one label per user and the user-level partition is
//! refined the same way.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::network::{MultiViewNetwork, ViewGraph};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("network has no nodes")]
    EmptyNetwork,
    #[error("user {0:?} has no cluster assignment")]
    Unassigned(String),
    #[error("cluster ids must be consecutive from 0 with no empty cluster")]
    NonConsecutive,
    #[error("unknown cluster {0}")]
    UnknownCluster(usize),
    #[error("no cluster has at least {0} members")]
    NoClusterLargeEnough(usize),
    #[error("min_size must be at least 2, got {0}")]
    BadMinSize(usize),
    #[error("resolution must be positive and coupling non-negative")]
    BadParams,
    #[error("clustering file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    /// Resolution `γ`.
    pub resolution: f64,
    /// Inter-view coupling `ω`.
    pub coupling: f64,
    pub seed: u64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams { resolution: 1.0, coupling: 1.0, seed: 42 }
    }
}

impl ClusterParams {
    fn validate(&self) -> Result<(), ClusterError> {
        if self.resolution > 0.0 && self.coupling >= 0.0 && self.resolution.is_finite() && self.coupling.is_finite() {
            Ok(())
        } else {
            Err(ClusterError::BadParams)
        }
    }
}

/// A total user -> cluster assignment with consecutive ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    users: Vec<Arc<str>>,
    labels: Vec<usize>,
    lookup: HashMap<Arc<str>, usize>,
    sizes: Vec<usize>,
    pub params: ClusterParams,
    /// Multilayer objective of this partition on the network it came from.
    pub objective: f64,
}

impl Clustering {
    /// Validates that ids run 0..k with every cluster non-empty.
    pub fn new<I, S>(assignment: I, params: ClusterParams) -> Result<Self, ClusterError>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<Arc<str>>,
    {
        let mut pairs: Vec<(Arc<str>, usize)> =
            assignment.into_iter().map(|(u, c)| (u.into(), c)).collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        pairs.dedup_by(|a, b| a.0 == b.0);
        let k = pairs.iter().map(|p| p.1 + 1).max().unwrap_or(0);
        let mut sizes = vec![0; k];
        for (_, c) in &pairs {
            sizes[*c] += 1;
        }
        if sizes.contains(&0) {
            return Err(ClusterError::NonConsecutive);
        }
        let lookup = pairs.iter().enumerate().map(|(i, (u, _))| (u.clone(), i)).collect();
        let (users, labels) = pairs.into_iter().unzip();
        Ok(Clustering { users, labels, lookup, sizes, params, objective: f64::NAN })
    }

    /// Renumbers arbitrary labels to 0..k in order of first appearance
    /// (users taken in the given order).
    pub fn relabeled<I, S>(assignment: I, params: ClusterParams) -> Self
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<Arc<str>>,
    {
        let mut remap = HashMap::new();
        let pairs: Vec<(Arc<str>, usize)> = assignment
            .into_iter()
            .map(|(u, c)| {
                let next = remap.len();
                (u.into(), *remap.entry(c).or_insert(next))
            })
            .collect();
        Clustering::new(pairs, params).expect("relabeled ids are consecutive")
    }

    pub fn cluster_of(&self, user: &str) -> Option<usize> {
        self.lookup.get(user).map(|&i| self.labels[i])
    }

    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn size(&self, cluster: usize) -> usize {
        self.sizes.get(cluster).copied().unwrap_or(0)
    }

    /// Members of `cluster` in user-id order.
    pub fn members(&self, cluster: usize) -> Vec<&Arc<str>> {
        self.users
            .iter()
            .zip(&self.labels)
            .filter(|(_, &c)| c == cluster)
            .map(|(u, _)| u)
            .collect()
    }

    /// (user, cluster) in user-id order.
    pub fn assignment(&self) -> impl Iterator<Item = (&Arc<str>, usize)> {
        self.users.iter().zip(self.labels.iter().copied())
    }

    /// Labels indexed by the network's node index.
    fn dense_labels(&self, network: &MultiViewNetwork) -> Result<Vec<usize>, ClusterError> {
        network
            .nodes()
            .names()
            .iter()
            .map(|u| self.cluster_of(u).ok_or_else(|| ClusterError::Unassigned(u.to_string())))
            .collect()
    }

    /// CSV `user_id,cluster` preceded by a `#` line with the run parameters.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), ClusterError> {
        writeln!(
            w,
            "# resolution={} coupling={} seed={} objective={}",
            self.params.resolution, self.params.coupling, self.params.seed, self.objective
        )?;
        writeln!(w, "user_id,cluster")?;
        for (user, c) in self.assignment() {
            writeln!(w, "{},{c}", csv_field(user))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, ClusterError> {
        let mut params = ClusterParams::default();
        let mut objective = f64::NAN;
        let mut body = String::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    let (k, v) = kv.split_once('=').unwrap_or((kv, ""));
                    let bad = || ClusterError::Parse { line: idx + 1, reason: format!("bad value in {kv:?}") };
                    match k {
                        "resolution" => params.resolution = v.parse().map_err(|_| bad())?,
                        "coupling" => params.coupling = v.parse().map_err(|_| bad())?,
                        "seed" => params.seed = v.parse().map_err(|_| bad())?,
                        "objective" => objective = v.parse().map_err(|_| bad())?,
                        _ => {}
                    }
                }
            } else {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let mut pairs = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let parse_err = |reason: String| ClusterError::Parse { line: i + 2, reason };
            let rec = rec.map_err(|e| parse_err(e.to_string()))?;
            if rec.len() != 2 {
                return Err(parse_err("expected user_id,cluster".into()));
            }
            let c: usize = rec[1].parse().map_err(|_| parse_err(format!("bad cluster {:?}", &rec[1])))?;
            pairs.push((rec[0].to_string(), c));
        }
        let mut clustering = Clustering::new(pairs, params)?;
        clustering.objective = objective;
        Ok(clustering)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) || s.starts_with('#') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Weighted modularity of one view under `clustering`:
/// `Q = Σ_c [ in_c / 2m − γ (tot_c / 2m)² ]`, zero for an edgeless view.
pub fn modularity(view: &ViewGraph, clustering: &Clustering, resolution: f64) -> Result<f64, ClusterError> {
    let mut internal: BTreeMap<usize, f64> = BTreeMap::new();
    let mut totals: BTreeMap<usize, f64> = BTreeMap::new();
    let mut two_m = 0.0;
    for (pair, &w) in view.edges() {
        let label = |u: &str| clustering.cluster_of(u).ok_or_else(|| ClusterError::Unassigned(u.to_string()));
        let (a, b) = (label(pair.lo())?, label(pair.hi())?);
        two_m += 2.0 * w;
        *totals.entry(a).or_insert(0.0) += w;
        *totals.entry(b).or_insert(0.0) += w;
        if a == b {
            *internal.entry(a).or_insert(0.0) += 2.0 * w;
        }
    }
    if two_m == 0.0 {
        return Ok(0.0);
    }
    Ok(totals
        .iter()
        .map(|(c, tot)| {
            let inside = internal.get(c).copied().unwrap_or(0.0);
            inside / two_m - resolution * (tot / two_m) * (tot / two_m)
        })
        .sum())
}

/// Per-user activity across views: `strength[view]` is the user's degree
/// in that view divided by the view's `2m` (0 when inactive).
fn normalized_strengths(network: &MultiViewNetwork) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = network.node_count();
    let mut two_m = Vec::new();
    let mut strength = vec![vec![0.0; network.views().len()]; n];
    for (s, _) in network.views().iter().enumerate() {
        let adj = network.adjacency(s);
        let total: f64 = adj.iter().flatten().map(|(_, w)| w).sum();
        two_m.push(total);
        if total > 0.0 {
            for (i, row) in adj.iter().enumerate() {
                strength[i][s] = row.iter().map(|(_, w)| w).sum::<f64>() / total;
            }
        }
    }
    (strength, two_m)
}

fn coupling_weight(two_m: &[f64], s: usize, r: usize, omega: f64) -> f64 {
    omega * 0.5 * (1.0 / two_m[s] + 1.0 / two_m[r])
}

/// Sum of per-view modularities plus the coupling credit of agreeing copies.
///
/// With one label per user every copy agrees, so the coupling part is a
/// constant of the network; with a single view it is zero.
pub fn multilayer_objective(
    network: &MultiViewNetwork,
    clustering: &Clustering,
    params: &ClusterParams,
) -> Result<f64, ClusterError> {
    let mut total = 0.0;
    for view in network.views() {
        total += modularity(view, clustering, params.resolution)?;
    }
    if params.coupling > 0.0 && network.views().len() > 1 {
        let (strength, two_m) = normalized_strengths(network);
        for row in &strength {
            let active: Vec<usize> = (0..row.len()).filter(|&s| row[s] > 0.0).collect();
            for (i, &s) in active.iter().enumerate() {
                for &r in &active[i + 1..] {
                    total += 2.0 * coupling_weight(&two_m, s, r, params.coupling);
                }
            }
        }
    }
    Ok(total)
}

/// Graph with per-layer null-model strengths, the unit Louvain works on.
#[derive(Debug, Clone)]
struct LayeredGraph {
    layers: usize,
    adj: Vec<Vec<(usize, f64)>>,
    /// Weight of ordered pairs inside each (super-)node.
    loops: Vec<f64>,
    /// `strength[p * layers + s]`
    strength: Vec<f64>,
}

impl LayeredGraph {
    fn len(&self) -> usize {
        self.adj.len()
    }

    fn strength(&self, p: usize) -> &[f64] {
        &self.strength[p * self.layers..(p + 1) * self.layers]
    }

    #[cfg(test)]
    fn objective(&self, labels: &[usize], resolution: f64) -> f64 {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut tot = vec![0.0; k * self.layers];
        let mut inside = 0.0;
        for p in 0..self.len() {
            inside += self.loops[p];
            for &(q, w) in &self.adj[p] {
                if labels[q] == labels[p] {
                    inside += w;
                }
            }
            for (s, x) in self.strength(p).iter().enumerate() {
                tot[labels[p] * self.layers + s] += x;
            }
        }
        inside - resolution * tot.iter().map(|t| t * t).sum::<f64>()
    }

    fn aggregate(&self, labels: &[usize], k: usize) -> LayeredGraph {
        let mut loops = vec![0.0; k];
        let mut strength = vec![0.0; k * self.layers];
        let mut links: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        for p in 0..self.len() {
            let c = labels[p];
            loops[c] += self.loops[p];
            for (s, x) in self.strength(p).iter().enumerate() {
                strength[c * self.layers + s] += x;
            }
            for &(q, w) in &self.adj[p] {
                let d = labels[q];
                if d == c {
                    loops[c] += w;
                } else {
                    *links[c].entry(d).or_insert(0.0) += w;
                }
            }
        }
        LayeredGraph {
            layers: self.layers,
            adj: links.into_iter().map(|m| m.into_iter().collect()).collect(),
            loops,
            strength,
        }
    }
}

const MIN_GAIN: f64 = 1e-12;
const MAX_PASSES: usize = 10_000;

/// Greedy local moving; returns whether any node changed community.
fn local_moving(g: &LayeredGraph, labels: &mut [usize], resolution: f64, rng: &mut ChaCha8Rng) -> bool {
    let n = g.len();
    let layers = g.layers;
    let mut tot = vec![0.0; n * layers];
    let mut size = vec![0usize; n];
    for p in 0..n {
        size[labels[p]] += 1;
        for (s, x) in g.strength(p).iter().enumerate() {
            tot[labels[p] * layers + s] += x;
        }
    }
    let mut empty: Vec<usize> = (0..n).filter(|&c| size[c] == 0).rev().collect();
    let mut link = vec![0.0; n];
    let mut is_touched = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    let mut any_move = false;

    for _ in 0..MAX_PASSES {
        order.shuffle(rng);
        let mut moved = false;
        for &p in &order {
            let current = labels[p];
            let kp = g.strength(p);
            for &(q, w) in &g.adj[p] {
                let c = labels[q];
                if !is_touched[c] {
                    is_touched[c] = true;
                    touched.push(c);
                }
                link[c] += w;
            }
            // Take p out of its community.
            for s in 0..layers {
                tot[current * layers + s] -= kp[s];
            }
            size[current] -= 1;

            let score = |c: usize, link_c: f64, tot: &[f64]| -> f64 {
                let null: f64 = (0..layers).map(|s| kp[s] * tot[c * layers + s]).sum();
                link_c - resolution * null
            };
            let stay = score(current, link[current], &tot);
            let mut best = current;
            let mut best_score = stay;
            for &c in &touched {
                if c == current {
                    continue;
                }
                let sc = score(c, link[c], &tot);
                if sc > best_score + MIN_GAIN {
                    best = c;
                    best_score = sc;
                }
            }
            // A fresh singleton scores 0.
            if size[current] > 0 && 0.0 > best_score + MIN_GAIN {
                best = empty.pop().expect("a community slot is free");
            }

            if size[current] == 0 && best != current {
                empty.push(current);
            }
            for s in 0..layers {
                tot[best * layers + s] += kp[s];
            }
            size[best] += 1;
            if best != current {
                labels[p] = best;
                moved = true;
            }
            for &c in &touched {
                link[c] = 0.0;
                is_touched[c] = false;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
        any_move = true;
    }
    any_move
}

fn renumber(labels: &mut [usize]) -> usize {
    let mut remap: HashMap<usize, usize> = HashMap::new();
    for l in labels.iter_mut() {
        let next = remap.len();
        *l = *remap.entry(*l).or_insert(next);
    }
    remap.len()
}

/// Louvain over `graph`, optionally starting from `initial`. Returns one
/// label per input node, numbered consecutively.
fn louvain(graph: &LayeredGraph, initial: Option<Vec<usize>>, resolution: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut membership: Vec<usize> = (0..graph.len()).collect();
    let mut labels = initial.unwrap_or_else(|| (0..graph.len()).collect());
    let mut level = graph.clone();
    loop {
        local_moving(&level, &mut labels, resolution, rng);
        let k = renumber(&mut labels);
        for m in membership.iter_mut() {
            *m = labels[*m];
        }
        if k == level.len() {
            break;
        }
        level = level.aggregate(&labels, k);
        labels = (0..k).collect();
    }
    renumber(&mut membership);
    membership
}

/// Clusters the network by maximizing the multilayer modularity.
///
/// Deterministic for a fixed seed. Views without edges are ignored.
pub fn multiview_cluster(network: &MultiViewNetwork, params: ClusterParams) -> Result<Clustering, ClusterError> {
    params.validate()?;
    let n = network.node_count();
    if n == 0 {
        return Err(ClusterError::EmptyNetwork);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (strength, two_m) = normalized_strengths(network);
    let active_layers: Vec<usize> = (0..two_m.len()).filter(|&s| two_m[s] > 0.0).collect();
    let layers = active_layers.len();

    // Stage 1: one node per (user, active view) copy.
    let mut copy_of: HashMap<(usize, usize), usize> = HashMap::new();
    let mut owner = Vec::new();
    let mut copy_strength = Vec::new();
    for (li, &s) in active_layers.iter().enumerate() {
        for (u, row) in strength.iter().enumerate() {
            if row[s] > 0.0 {
                copy_of.insert((u, s), owner.len());
                owner.push((u, s));
                let mut vec = vec![0.0; layers];
                vec[li] = row[s];
                copy_strength.extend(vec);
            }
        }
    }
    let mut copy_adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); owner.len()];
    for &s in &active_layers {
        for (u, row) in network.adjacency(s).into_iter().enumerate() {
            for (v, w) in row {
                copy_adj[copy_of[&(u, s)]].push((copy_of[&(v, s)], w / two_m[s]));
            }
        }
    }
    if params.coupling > 0.0 {
        for (u, row) in strength.iter().enumerate() {
            let present: Vec<usize> = active_layers.iter().copied().filter(|&s| row[s] > 0.0).collect();
            for &s in &present {
                for &r in &present {
                    if s != r {
                        let w = coupling_weight(&two_m, s, r, params.coupling);
                        copy_adj[copy_of[&(u, s)]].push((copy_of[&(u, r)], w));
                    }
                }
            }
        }
    }
    let copies = LayeredGraph {
        layers,
        loops: vec![0.0; owner.len()],
        adj: copy_adj,
        strength: copy_strength,
    };
    let copy_labels = louvain(&copies, None, params.resolution, &mut rng);

    // Collapse: each user takes the label of its most active copy.
    let mut user_labels = vec![usize::MAX; n];
    let mut best_strength = vec![f64::NEG_INFINITY; n];
    for (c, &(u, s)) in owner.iter().enumerate() {
        if strength[u][s] > best_strength[u] {
            best_strength[u] = strength[u][s];
            user_labels[u] = copy_labels[c];
        }
    }

    // Stage 2: refine with every copy of a user moving together.
    let mut user_adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for &s in &active_layers {
        for (u, row) in network.adjacency(s).into_iter().enumerate() {
            for (v, w) in row {
                *user_adj[u].entry(v).or_insert(0.0) += w / two_m[s];
            }
        }
    }
    let users = LayeredGraph {
        layers,
        loops: vec![0.0; n],
        adj: user_adj.into_iter().map(|m| m.into_iter().collect()).collect(),
        strength: strength
            .iter()
            .flat_map(|row| active_layers.iter().map(move |&s| row[s]))
            .collect(),
    };
    let next = copy_labels.iter().max().map_or(0, |m| m + 1);
    for (label, fresh) in user_labels.iter_mut().filter(|l| **l == usize::MAX).zip(next..) {
        *label = fresh;
    }
    renumber(&mut user_labels);
    let refined = louvain(&users, Some(user_labels), params.resolution, &mut rng);

    let names = network.nodes().names();
    let candidates = [
        refined,
        (0..n).collect::<Vec<_>>(),
        vec![0; n],
    ];
    let mut best: Option<Clustering> = None;
    for labels in candidates {
        let mut candidate = Clustering::relabeled(names.iter().cloned().zip(labels), params);
        candidate.objective = multilayer_objective(network, &candidate, &params)?;
        if best.as_ref().is_none_or(|b| candidate.objective > b.objective) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// Cluster with the highest intra-cluster weight per possible pair.
///
/// Ties go to the larger total weight, then to the cluster holding the
/// smallest user id, so the answer does not depend on how clusters are
/// numbered.
pub fn densest_cluster(
    network: &MultiViewNetwork,
    clustering: &Clustering,
    min_size: usize,
) -> Result<usize, ClusterError> {
    if min_size < 2 {
        return Err(ClusterError::BadMinSize(min_size));
    }
    let stats = cluster_weights(network, clustering)?;
    let mut first_member: Vec<Option<&Arc<str>>> = vec![None; clustering.num_clusters()];
    for (user, c) in clustering.assignment() {
        first_member[c].get_or_insert(user);
    }
    let mut best: Option<(usize, f64, f64)> = None;
    for c in 0..clustering.num_clusters() {
        let size = clustering.size(c);
        if size < min_size {
            continue;
        }
        let weight = stats[c];
        let density = weight / (size * (size - 1) / 2) as f64;
        let better = match best {
            None => true,
            Some((b, d, w)) => {
                density > d
                    || (density == d && (weight > w || (weight == w && first_member[c] < first_member[b])))
            }
        };
        if better {
            best = Some((c, density, weight));
        }
    }
    best.map(|b| b.0).ok_or(ClusterError::NoClusterLargeEnough(min_size))
}

/// Density of one cluster as used by [`densest_cluster`].
pub fn cluster_density(network: &MultiViewNetwork, clustering: &Clustering, cluster: usize) -> Result<f64, ClusterError> {
    let size = clustering.size(cluster);
    if size == 0 {
        return Err(ClusterError::UnknownCluster(cluster));
    }
    if size < 2 {
        return Ok(0.0);
    }
    Ok(cluster_weights(network, clustering)?[cluster] / (size * (size - 1) / 2) as f64)
}

fn cluster_weights(network: &MultiViewNetwork, clustering: &Clustering) -> Result<Vec<f64>, ClusterError> {
    let labels = clustering.dense_labels(network)?;
    let mut weight = vec![0.0; clustering.num_clusters()];
    for s in 0..network.views().len() {
        for (u, row) in network.adjacency(s).iter().enumerate() {
            for &(v, w) in row {
                if u < v && labels[u] == labels[v] {
                    weight[labels[u]] += w;
                }
            }
        }
    }
    Ok(weight)
}
