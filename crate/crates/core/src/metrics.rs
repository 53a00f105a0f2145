//! Account ranking inside a cluster: total degree, per-view eigenvector
//! centrality and community-hub modularity vitality.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::Write;
use std::sync::Arc;

use thiserror::Error;

use crate::actions::ActionType;
use crate::cluster::{ClusterError, Clustering};
use crate::network::{Adjacency, MultiViewNetwork, ViewGraph};

pub const EIGEN_TOLERANCE: f64 = 1e-8;
pub const EIGEN_MAX_ITERATIONS: usize = 1000;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("view {0} has no edges")]
    NoEdges(ActionType),
    #[error("eigenvector centrality did not converge for view {view} within {iterations} iterations")]
    NotConverged { view: ActionType, iterations: usize },
    #[error("view {0} is not part of the network")]
    UnknownView(ActionType),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sum over views of the user's weighted degree.
pub fn total_degree(network: &MultiViewNetwork, user: &str) -> Result<f64, MetricsError> {
    if !network.contains(user) {
        return Err(MetricsError::UnknownUser(user.to_string()));
    }
    Ok(network.views().iter().map(|v| v.degree(user)).sum())
}

/// Total degree of every node, indexed like the network's node index.
pub fn total_degrees(network: &MultiViewNetwork) -> Vec<f64> {
    let mut out = vec![0.0; network.node_count()];
    for s in 0..network.views().len() {
        for (i, row) in network.adjacency(s).iter().enumerate() {
            out[i] += row.iter().map(|(_, w)| w).sum::<f64>();
        }
    }
    out
}

fn adjacency_of(view: &ViewGraph) -> (Vec<Arc<str>>, Adjacency) {
    let names: Vec<Arc<str>> = view.nodes().iter().cloned().collect();
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (&**n, i)).collect();
    let mut adj = vec![Vec::new(); names.len()];
    for (pair, &w) in view.edges() {
        let (a, b) = (index[pair.lo()], index[pair.hi()]);
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    (names, adj)
}

/// Node set of the largest connected component: most nodes, then most
/// weight, then the one holding the smallest user id.
fn largest_component(adj: &Adjacency) -> Vec<usize> {
    let mut comp = vec![usize::MAX; adj.len()];
    let mut best: Option<(Vec<usize>, f64)> = None;
    for start in 0..adj.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = start;
        let mut members = vec![start];
        let mut queue = VecDeque::from([start]);
        let mut weight = 0.0;
        while let Some(x) = queue.pop_front() {
            for &(y, w) in &adj[x] {
                weight += w;
                if comp[y] == usize::MAX {
                    comp[y] = start;
                    members.push(y);
                    queue.push_back(y);
                }
            }
        }
        let better = match &best {
            None => true,
            Some((m, bw)) => members.len() > m.len() || (members.len() == m.len() && weight > *bw),
        };
        if better {
            best = Some((members, weight));
        }
    }
    let mut members = best.map(|b| b.0).unwrap_or_default();
    members.sort_unstable();
    members
}

/// Eigenvector centrality of one view.
///
/// Power iteration from the uniform vector on the largest connected
/// component; every other node scores 0. The iteration uses `A/d + I`
/// (`d` the largest weighted degree), which has the same leading eigenvector
/// as `A` and does not oscillate on bipartite components. Scores are
/// non-negative with unit Euclidean norm.
pub fn eigenvector_centrality(view: &ViewGraph) -> Result<BTreeMap<Arc<str>, f64>, MetricsError> {
    let (scores, converged) = power_iteration(view)?;
    if converged {
        Ok(scores)
    } else {
        Err(MetricsError::NotConverged { view: view.view, iterations: EIGEN_MAX_ITERATIONS })
    }
}

/// The last iterate and whether it met the tolerance within the cap.
fn power_iteration(view: &ViewGraph) -> Result<(BTreeMap<Arc<str>, f64>, bool), MetricsError> {
    if view.edge_count() == 0 {
        return Err(MetricsError::NoEdges(view.view));
    }
    let (names, adj) = adjacency_of(view);
    let members = largest_component(&adj);
    let local: HashMap<usize, usize> = members.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let n = members.len();
    let rows: Vec<Vec<(usize, f64)>> = members
        .iter()
        .map(|&g| adj[g].iter().map(|&(h, w)| (local[&h], w)).collect())
        .collect();
    let max_degree = rows
        .iter()
        .map(|r| r.iter().map(|(_, w)| w).sum::<f64>())
        .fold(0.0, f64::max);

    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut next = vec![0.0; n];
    let mut converged = false;
    for _ in 0..EIGEN_MAX_ITERATIONS {
        for (i, row) in rows.iter().enumerate() {
            next[i] = x[i] + row.iter().map(|&(j, w)| w * x[j]).sum::<f64>() / max_degree;
        }
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut diff = 0.0;
        for i in 0..n {
            next[i] /= norm;
            diff += (next[i] - x[i]) * (next[i] - x[i]);
        }
        std::mem::swap(&mut x, &mut next);
        if diff.sqrt() < EIGEN_TOLERANCE {
            converged = true;
            break;
        }
    }

    let mut scores: BTreeMap<Arc<str>, f64> = names.iter().map(|n| (n.clone(), 0.0)).collect();
    for (i, &g) in members.iter().enumerate() {
        scores.insert(names[g].clone(), x[i]);
    }
    Ok((scores, converged))
}

/// Which graph vitality is measured on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum VitalityGraph {
    /// Views summed edge by edge.
    #[default]
    Aggregate,
    View(ActionType),
}

/// Precomputed modularity terms for repeated vitality queries under a fixed
/// partition (γ = 1).
#[derive(Debug, Clone)]
pub struct VitalityContext {
    adj: Adjacency,
    labels: Vec<usize>,
    degree: Vec<f64>,
    totals: Vec<f64>,
    two_m: f64,
    inside: f64,
    sum_sq_totals: f64,
    edge_count: usize,
    modularity: f64,
}

impl VitalityContext {
    pub fn new(
        network: &MultiViewNetwork,
        clustering: &Clustering,
        graph: VitalityGraph,
    ) -> Result<Self, MetricsError> {
        let adj = match graph {
            VitalityGraph::Aggregate => network.aggregate_adjacency(),
            VitalityGraph::View(kind) => {
                let idx = network
                    .views()
                    .iter()
                    .position(|v| v.view == kind)
                    .ok_or(MetricsError::UnknownView(kind))?;
                network.adjacency(idx)
            }
        };
        let labels: Vec<usize> = network
            .nodes()
            .names()
            .iter()
            .map(|u| clustering.cluster_of(u).ok_or_else(|| ClusterError::Unassigned(u.to_string())))
            .collect::<Result<_, _>>()?;
        Ok(Self::from_parts(adj, labels))
    }

    pub(crate) fn from_parts(adj: Adjacency, labels: Vec<usize>) -> Self {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let degree: Vec<f64> = adj.iter().map(|r| r.iter().map(|(_, w)| w).sum()).collect();
        let mut totals = vec![0.0; k];
        let mut inside = 0.0;
        let mut edge_count = 0;
        for (x, row) in adj.iter().enumerate() {
            totals[labels[x]] += degree[x];
            edge_count += row.len();
            for &(y, w) in row {
                if labels[x] == labels[y] {
                    inside += w;
                }
            }
        }
        let two_m: f64 = degree.iter().sum();
        let sum_sq_totals: f64 = totals.iter().map(|t| t * t).sum();
        let modularity = Self::q(inside, sum_sq_totals, two_m);
        VitalityContext {
            adj,
            labels,
            degree,
            totals,
            two_m,
            inside,
            sum_sq_totals,
            edge_count: edge_count / 2,
            modularity,
        }
    }

    fn q(inside: f64, sum_sq_totals: f64, two_m: f64) -> f64 {
        if two_m <= 0.0 {
            0.0
        } else {
            inside / two_m - sum_sq_totals / (two_m * two_m)
        }
    }

    pub fn modularity(&self) -> f64 {
        self.modularity
    }

    /// `Q(G) − Q(G − node)` with the partition left untouched.
    pub fn vitality(&self, node: usize) -> f64 {
        let row = &self.adj[node];
        if row.is_empty() {
            return 0.0;
        }
        if row.len() == self.edge_count {
            return self.modularity;
        }
        let own = self.labels[node];
        let mut delta: BTreeMap<usize, f64> = BTreeMap::new();
        delta.insert(own, self.degree[node]);
        let mut inside = self.inside;
        for &(y, w) in row {
            *delta.entry(self.labels[y]).or_insert(0.0) += w;
            if self.labels[y] == own {
                inside -= 2.0 * w;
            }
        }
        let mut sum_sq = self.sum_sq_totals;
        for (c, d) in delta {
            let before = self.totals[c];
            let after = before - d;
            sum_sq += after * after - before * before;
        }
        let two_m = self.two_m - 2.0 * self.degree[node];
        self.modularity - Self::q(inside, sum_sq, two_m)
    }
}

/// Community-hub modularity vitality of `user` on the view-summed graph.
/// Positive values mark hubs of their community, negative values bridges.
pub fn modularity_vitality(
    network: &MultiViewNetwork,
    clustering: &Clustering,
    user: &str,
) -> Result<f64, MetricsError> {
    let idx = network
        .nodes()
        .get(user)
        .ok_or_else(|| MetricsError::UnknownUser(user.to_string()))?;
    Ok(VitalityContext::new(network, clustering, VitalityGraph::Aggregate)?.vitality(idx))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralityRow {
    pub user: Arc<str>,
    pub total_degree: f64,
    /// One score per network view, in view order.
    pub eigenvector: Vec<f64>,
    pub vitality: f64,
    pub rank_degree: usize,
    pub rank_eigenvector: Vec<usize>,
    pub rank_vitality: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralityReport {
    pub cluster: usize,
    pub views: Vec<ActionType>,
    /// Ordered by `rank_degree`.
    pub rows: Vec<CentralityRow>,
    /// Views whose power iteration hit the cap; their scores are the last
    /// iterate.
    pub unconverged: Vec<ActionType>,
}

/// 1-based ranks, highest value first, ties by user id.
fn ranks(values: &[f64], users: &[Arc<str>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| users[a].cmp(&users[b]))
    });
    let mut out = vec![0; values.len()];
    for (r, &i) in order.iter().enumerate() {
        out[i] = r + 1;
    }
    out
}

/// Ranks the members of one cluster; all measures use the full network.
pub fn rank_cluster(
    network: &MultiViewNetwork,
    clustering: &Clustering,
    cluster: usize,
) -> Result<CentralityReport, MetricsError> {
    if cluster >= clustering.num_clusters() {
        return Err(ClusterError::UnknownCluster(cluster).into());
    }
    let members: Vec<Arc<str>> = clustering.members(cluster).into_iter().cloned().collect();
    let indices: Vec<usize> = members
        .iter()
        .map(|u| network.nodes().get(u).ok_or_else(|| MetricsError::UnknownUser(u.to_string())))
        .collect::<Result<_, _>>()?;

    let degrees = total_degrees(network);
    let degree: Vec<f64> = indices.iter().map(|&i| degrees[i]).collect();

    let mut eigen_by_view = Vec::new();
    let mut unconverged = Vec::new();
    for view in network.views() {
        let scores = match power_iteration(view) {
            Ok((scores, converged)) => {
                if !converged {
                    unconverged.push(view.view);
                }
                scores
            }
            Err(MetricsError::NoEdges(_)) => BTreeMap::new(),
            Err(e) => return Err(e),
        };
        eigen_by_view.push(members.iter().map(|u| scores.get(u).copied().unwrap_or(0.0)).collect::<Vec<f64>>());
    }

    let context = VitalityContext::new(network, clustering, VitalityGraph::Aggregate)?;
    let vitality: Vec<f64> = indices.iter().map(|&i| context.vitality(i)).collect();

    let rank_degree = ranks(&degree, &members);
    let rank_vitality = ranks(&vitality, &members);
    let rank_eigen: Vec<Vec<usize>> = eigen_by_view.iter().map(|v| ranks(v, &members)).collect();

    let mut rows: Vec<CentralityRow> = (0..members.len())
        .map(|i| CentralityRow {
            user: members[i].clone(),
            total_degree: degree[i],
            eigenvector: eigen_by_view.iter().map(|v| v[i]).collect(),
            vitality: vitality[i],
            rank_degree: rank_degree[i],
            rank_eigenvector: rank_eigen.iter().map(|r| r[i]).collect(),
            rank_vitality: rank_vitality[i],
        })
        .collect();
    rows.sort_by_key(|r| r.rank_degree);
    Ok(CentralityReport {
        cluster,
        views: network.views().iter().map(|v| v.view).collect(),
        rows,
        unconverged,
    })
}

impl CentralityReport {
    /// `user_id,total_degree,eig_<view>...,vitality,rank_degree,rank_vitality`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), MetricsError> {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["user_id".to_string(), "total_degree".to_string()];
        header.extend(self.views.iter().map(|v| format!("eig_{}", v.name())));
        header.extend(["vitality", "rank_degree", "rank_vitality"].map(String::from));
        csv.write_record(&header).map_err(std::io::Error::from)?;
        for row in &self.rows {
            let mut rec = vec![row.user.to_string(), row.total_degree.to_string()];
            rec.extend(row.eigenvector.iter().map(|e| e.to_string()));
            rec.push(row.vitality.to_string());
            rec.push(row.rank_degree.to_string());
            rec.push(row.rank_vitality.to_string());
            csv.write_record(&rec).map_err(std::io::Error::from)?;
        }
        csv.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::ClusterParams;

    fn net(views: Vec<(ActionType, Vec<(&str, &str, f64)>)>) -> MultiViewNetwork {
        MultiViewNetwork::from_views(
            views
                .into_iter()
                .map(|(k, e)| ViewGraph::from_edges(k, e))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn total_degree_sums_views() {
        let n = net(vec![
            (ActionType::Hashtag, vec![("u", "a", 2.0), ("u", "b", 3.0)]),
            (ActionType::Url, vec![("u", "c", 4.0)]),
        ]);
        assert_eq!(total_degree(&n, "u").unwrap(), 9.0);
        assert_eq!(total_degree(&n, "c").unwrap(), 4.0);
        assert!(matches!(total_degree(&n, "zz"), Err(MetricsError::UnknownUser(_))));
        let all = total_degrees(&n);
        assert_eq!(all[n.nodes().get("u").unwrap()], 9.0);
    }

    #[test]
    fn triangle_is_uniform() {
        let v = ViewGraph::from_edges(ActionType::Hashtag, [("a", "b", 1.0), ("b", "c", 1.0), ("a", "c", 1.0)]);
        let scores = eigenvector_centrality(&v).unwrap();
        for s in scores.values() {
            assert!((s - 1.0 / 3f64.sqrt()).abs() < 1e-8);
        }
    }

    #[test]
    fn star_center_is_twice_a_leaf() {
        let v = ViewGraph::from_edges(
            ActionType::Hashtag,
            [("c", "l1", 1.0), ("c", "l2", 1.0), ("c", "l3", 1.0), ("c", "l4", 1.0)],
        );
        let s = eigenvector_centrality(&v).unwrap();
        assert!((s["c"] / s["l1"] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn near_degenerate_view_still_ranks() {
        let mut edges = Vec::new();
        for (prefix, w) in [("a", 1.0), ("b", 1.0001)] {
            for i in 0..5 {
                for j in i + 1..5 {
                    edges.push((format!("{prefix}{i}"), format!("{prefix}{j}"), w));
                }
            }
        }
        edges.push(("a0".into(), "b0".into(), 1e-9));
        let v = ViewGraph::from_edges(ActionType::Hashtag, edges);
        assert!(matches!(eigenvector_centrality(&v), Err(MetricsError::NotConverged { .. })));
        let n = MultiViewNetwork::from_views(vec![v]).unwrap();
        let names: Vec<Arc<str>> = n.nodes().names().to_vec();
        let c = Clustering::relabeled(
            names.iter().map(|u| (u.clone(), usize::from(u.starts_with('b')))),
            ClusterParams::default(),
        );
        let report = rank_cluster(&n, &c, 0).unwrap();
        assert_eq!(report.unconverged, vec![ActionType::Hashtag]);
        assert_eq!(report.rows.len(), 5);
        assert!(report.rows.iter().all(|r| r.eigenvector[0].is_finite()));
    }

    #[test]
    fn smaller_components_score_zero() {
        let v = ViewGraph::from_edges(
            ActionType::Url,
            [("a", "b", 1.0), ("b", "c", 1.0), ("x", "y", 5.0)],
        );
        let s = eigenvector_centrality(&v).unwrap();
        assert_eq!(s["x"], 0.0);
        assert_eq!(s["y"], 0.0);
        let norm: f64 = s.values().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(matches!(
            eigenvector_centrality(&ViewGraph::new(ActionType::Url)),
            Err(MetricsError::NoEdges(ActionType::Url))
        ));
    }

    #[test]
    fn isolated_node_has_zero_vitality() {
        let adj = vec![vec![(1, 1.0)], vec![(0, 1.0)], vec![]];
        let ctx = VitalityContext::from_parts(adj, vec![0, 0, 1]);
        assert_eq!(ctx.vitality(2), 0.0);
    }

    #[test]
    fn cut_vertex_is_a_bridge() {
        // Bowtie: triangles a-b-x and x-d-e share x, which sits with a and b.
        let n = net(vec![(
            ActionType::Hashtag,
            vec![("a", "b", 1.0), ("a", "x", 1.0), ("b", "x", 1.0), ("x", "d", 1.0), ("x", "e", 1.0), ("d", "e", 1.0)],
        )]);
        let c = Clustering::new([("a", 0), ("b", 0), ("x", 0), ("d", 1), ("e", 1)], ClusterParams::default()).unwrap();
        // Q = 8/12 - 80/144; without x both pairs are perfect halves, Q' = 1/2.
        let expected = (8.0 / 12.0 - 80.0 / 144.0) - 0.5;
        let v = modularity_vitality(&n, &c, "x").unwrap();
        assert!((v - expected).abs() < 1e-12);
        assert!(v < 0.0);
    }

    #[test]
    fn removing_only_hub_leaves_nothing() {
        let n = net(vec![(ActionType::Hashtag, vec![("h", "a", 1.0), ("h", "b", 1.0)])]);
        let c = Clustering::new([("h", 0), ("a", 0), ("b", 0)], ClusterParams::default()).unwrap();
        let v = modularity_vitality(&n, &c, "h").unwrap();
        assert_eq!(v, 0.0); // one cluster: Q = 0 before and after
    }

    #[test]
    fn hub_ranks_first() {
        let mut edges = vec![];
        let spokes = ["s1", "s2", "s3", "s4", "s5"];
        for s in spokes {
            edges.push(("hub", s, 2.0));
        }
        edges.push(("s1", "s2", 1.0));
        edges.push(("o1", "o2", 1.0));
        let n = net(vec![(ActionType::Mention, edges)]);
        let mut assignment: Vec<(&str, usize)> = spokes.iter().map(|s| (*s, 0)).collect();
        assignment.push(("hub", 0));
        assignment.extend([("o1", 1), ("o2", 1)]);
        let c = Clustering::new(assignment, ClusterParams::default()).unwrap();
        let report = rank_cluster(&n, &c, 0).unwrap();
        assert_eq!(&*report.rows[0].user, "hub");
        assert_eq!(report.rows[0].total_degree, 10.0);
        assert_eq!(report.rows[0].rank_eigenvector, vec![1]);
        let mut seen: Vec<usize> = report.rows.iter().map(|r| r.rank_vitality).collect();
        seen.sort();
        assert_eq!(seen, (1..=6).collect::<Vec<_>>());
        assert!(matches!(rank_cluster(&n, &c, 9), Err(MetricsError::Cluster(ClusterError::UnknownCluster(9)))));

        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("user_id,total_degree,eig_mention,vitality,rank_degree,rank_vitality\nhub,10,"));
    }

    #[test]
    fn one_member_report() {
        let n = net(vec![(ActionType::Url, vec![("a", "b", 1.0)])]);
        let c = Clustering::new([("a", 0), ("b", 1)], ClusterParams::default()).unwrap();
        let report = rank_cluster(&n, &c, 1).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].rank_degree, 1);
    }
}
