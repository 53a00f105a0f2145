//! The multi-view coordination network: one weighted user-user layer per
//! action type over a shared node index.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::actions::ActionType;
use crate::window::{EdgeAccumulator, UserPair};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("a network needs at least one view")]
    NoViews,
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("min_weight must be a non-negative number, got {0}")]
    BadThreshold(f64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: line {line}: {reason}")]
    BadRow { path: PathBuf, line: u64, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> NetworkError + '_ {
    move |source| NetworkError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> NetworkError + '_ {
    move |source| NetworkError::Csv { path: path.to_path_buf(), source }
}

/// One undirected weighted layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewGraph {
    pub view: ActionType,
    nodes: BTreeSet<Arc<str>>,
    edges: BTreeMap<UserPair, f64>,
}

impl ViewGraph {
    pub fn new(view: ActionType) -> Self {
        ViewGraph { view, nodes: BTreeSet::new(), edges: BTreeMap::new() }
    }

    /// Builds a view from weighted pairs, summing duplicates.
    pub fn from_edges<I, S>(view: ActionType, edges: I) -> Self
    where
        I: IntoIterator<Item = (S, S, f64)>,
        S: Into<Arc<str>>,
    {
        let mut g = ViewGraph::new(view);
        for (a, b, w) in edges {
            if let Some(pair) = UserPair::new(a, b) {
                g.insert(pair, w);
            }
        }
        g
    }

    fn insert(&mut self, pair: UserPair, weight: f64) {
        if weight <= 0.0 {
            return;
        }
        self.nodes.insert(pair.lo_arc().clone());
        self.nodes.insert(pair.hi_arc().clone());
        *self.edges.entry(pair).or_insert(0.0) += weight;
    }

    /// Users with at least one edge in this view.
    pub fn nodes(&self) -> &BTreeSet<Arc<str>> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeMap<UserPair, f64> {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn weight(&self, a: &str, b: &str) -> f64 {
        UserPair::new(a, b)
            .and_then(|p| self.edges.get(&p).copied())
            .unwrap_or(0.0)
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.values().sum()
    }

    /// Weighted degree of `user` in this view (0 if absent).
    pub fn degree(&self, user: &str) -> f64 {
        self.edges
            .iter()
            .filter(|(p, _)| p.contains(user))
            .map(|(_, w)| w)
            .sum()
    }

    fn restricted_to(&self, keep: &BTreeSet<Arc<str>>) -> ViewGraph {
        let mut g = ViewGraph::new(self.view);
        for (pair, &w) in &self.edges {
            if keep.contains(pair.lo()) && keep.contains(pair.hi()) {
                g.insert(pair.clone(), w);
            }
        }
        g
    }
}

/// Shared dense numbering of users, sorted by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeIndex {
    names: Vec<Arc<str>>,
    lookup: HashMap<Arc<str>, usize>,
}

impl NodeIndex {
    pub fn new<I: IntoIterator<Item = Arc<str>>>(names: I) -> Self {
        let set: BTreeSet<Arc<str>> = names.into_iter().collect();
        let names: Vec<Arc<str>> = set.into_iter().collect();
        let lookup = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        NodeIndex { names, lookup }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, user: &str) -> Option<usize> {
        self.lookup.get(user).copied()
    }

    pub fn name(&self, idx: usize) -> &Arc<str> {
        &self.names[idx]
    }

    pub fn names(&self) -> &[Arc<str>] {
        &self.names
    }
}

/// Weighted adjacency lists over the node index.
pub type Adjacency = Vec<Vec<(usize, f64)>>;

/// The multi-view network `G = {V, E, L}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewNetwork {
    views: Vec<ViewGraph>,
    nodes: NodeIndex,
}

impl MultiViewNetwork {
    /// Wraps views, indexing the union of their node sets.
    pub fn from_views(views: Vec<ViewGraph>) -> Result<Self, NetworkError> {
        if views.is_empty() {
            return Err(NetworkError::NoViews);
        }
        let nodes = NodeIndex::new(views.iter().flat_map(|v| v.nodes.iter().cloned()));
        Ok(MultiViewNetwork { views, nodes })
    }

    pub fn views(&self) -> &[ViewGraph] {
        &self.views
    }

    pub fn view(&self, kind: ActionType) -> Option<&ViewGraph> {
        self.views.iter().find(|v| v.view == kind)
    }

    pub fn nodes(&self) -> &NodeIndex {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains(&self, user: &str) -> bool {
        self.nodes.get(user).is_some()
    }

    /// Adjacency of one view (by position) over the shared index.
    pub fn adjacency(&self, view_idx: usize) -> Adjacency {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (pair, &w) in &self.views[view_idx].edges {
            let (a, b) = self.pair_indices(pair);
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        adj
    }

    /// Adjacency of the view-summed aggregate graph.
    pub fn aggregate_adjacency(&self) -> Adjacency {
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for view in &self.views {
            for (pair, &w) in &view.edges {
                *merged.entry(self.pair_indices(pair)).or_insert(0.0) += w;
            }
        }
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for ((a, b), w) in merged {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        adj
    }

    fn pair_indices(&self, pair: &UserPair) -> (usize, usize) {
        let a = self.nodes.get(pair.lo()).expect("edge endpoint outside node index");
        let b = self.nodes.get(pair.hi()).expect("edge endpoint outside node index");
        (a, b)
    }

    /// Nodes within `radius` hops of `user` in the union of all views.
    pub fn within_radius(&self, user: &str, radius: u32) -> Result<BTreeSet<Arc<str>>, NetworkError> {
        let start = self
            .nodes
            .get(user)
            .ok_or_else(|| NetworkError::UnknownUser(user.to_string()))?;
        let mut union: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.nodes.len()];
        for view in &self.views {
            for pair in view.edges.keys() {
                let (a, b) = self.pair_indices(pair);
                union[a].insert(b);
                union[b].insert(a);
            }
        }
        let mut dist = vec![u32::MAX; self.nodes.len()];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(x) = queue.pop_front() {
            if dist[x] == radius {
                continue;
            }
            for &y in &union[x] {
                if dist[y] == u32::MAX {
                    dist[y] = dist[x] + 1;
                    queue.push_back(y);
                }
            }
        }
        Ok((0..self.nodes.len())
            .filter(|&i| dist[i] != u32::MAX)
            .map(|i| self.nodes.name(i).clone())
            .collect())
    }

    /// Induced sub-network on `keep`; the node index is exactly `keep`.
    pub fn induced(&self, keep: &BTreeSet<Arc<str>>) -> MultiViewNetwork {
        let views = self.views.iter().map(|v| v.restricted_to(keep)).collect();
        MultiViewNetwork { views, nodes: NodeIndex::new(keep.iter().cloned()) }
    }
}

/// Builds the network, dropping edges lighter than `min_weight` and the
/// users left without any edge.
pub fn assemble(
    accumulators: &BTreeMap<ActionType, EdgeAccumulator>,
    min_weight: f64,
) -> Result<MultiViewNetwork, NetworkError> {
    if min_weight.is_nan() || min_weight < 0.0 || min_weight.is_infinite() {
        return Err(NetworkError::BadThreshold(min_weight));
    }
    let views = accumulators
        .iter()
        .map(|(&kind, acc)| {
            let mut g = ViewGraph::new(kind);
            for (pair, w) in acc.iter() {
                if w >= min_weight {
                    g.insert(pair.clone(), w);
                }
            }
            g
        })
        .collect();
    MultiViewNetwork::from_views(views)
}

/// Ego network of `user`: everything within `radius` hops in any view.
pub fn ego(network: &MultiViewNetwork, user: &str, radius: u32) -> Result<MultiViewNetwork, NetworkError> {
    let keep = network.within_radius(user, radius)?;
    Ok(network.induced(&keep))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrengthMode {
    /// Top-k within each view.
    PerView,
    /// Top-k by the mean weight across all views (absent counts as 0).
    Averaged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEdge {
    pub pair: UserPair,
    /// Weight in each view, in network view order.
    pub weights: Vec<f64>,
    pub score: f64,
    /// The view ranked in, for per-view mode.
    pub view: Option<ActionType>,
}

fn rank_desc(a: &(UserPair, f64), b: &(UserPair, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

pub fn strongest_edges(network: &MultiViewNetwork, k: usize, mode: StrengthMode) -> Vec<RankedEdge> {
    let views = network.views();
    let weights_of = |pair: &UserPair| -> Vec<f64> {
        views.iter().map(|v| v.edges.get(pair).copied().unwrap_or(0.0)).collect()
    };
    match mode {
        StrengthMode::Averaged => {
            let pairs: BTreeSet<&UserPair> = views.iter().flat_map(|v| v.edges.keys()).collect();
            let mut scored: Vec<(UserPair, f64)> = pairs
                .into_iter()
                .map(|p| (p.clone(), weights_of(p).iter().sum::<f64>() / views.len() as f64))
                .collect();
            scored.sort_by(rank_desc);
            scored
                .into_iter()
                .take(k)
                .map(|(pair, score)| RankedEdge { weights: weights_of(&pair), pair, score, view: None })
                .collect()
        }
        StrengthMode::PerView => views
            .iter()
            .flat_map(|view| {
                let mut scored: Vec<(UserPair, f64)> =
                    view.edges.iter().map(|(p, &w)| (p.clone(), w)).collect();
                scored.sort_by(rank_desc);
                scored.truncate(k);
                scored.into_iter().map(move |(pair, score)| RankedEdge {
                    weights: weights_of(&pair),
                    pair,
                    score,
                    view: Some(view.view),
                })
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    GraphMl,
    EdgeCsv,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "graphml" => Ok(ExportFormat::GraphMl),
            "edge-csv" | "csv" => Ok(ExportFormat::EdgeCsv),
            other => Err(format!("unknown export format {other:?}")),
        }
    }
}

/// `<basename>.<view>.csv` next to `base`.
pub fn edge_csv_path(base: &Path, view: ActionType) -> PathBuf {
    let name = base.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    base.with_file_name(format!("{name}.{}.csv", view.name()))
}

pub fn graphml_path(base: &Path) -> PathBuf {
    let name = base.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    base.with_file_name(format!("{name}.graphml"))
}

/// Writes the network under `base` (a path prefix). Returns the files written.
pub fn export_network(
    network: &MultiViewNetwork,
    format: ExportFormat,
    base: &Path,
) -> Result<Vec<PathBuf>, NetworkError> {
    match format {
        ExportFormat::EdgeCsv => network
            .views
            .iter()
            .map(|view| {
                let path = edge_csv_path(base, view.view);
                write_edge_csv(view, &path)?;
                Ok(path)
            })
            .collect(),
        ExportFormat::GraphMl => {
            let path = graphml_path(base);
            let file = File::create(&path).map_err(io_err(&path))?;
            write_graphml(network, BufWriter::new(file)).map_err(io_err(&path))?;
            Ok(vec![path])
        }
    }
}

/// `source,target,weight`, source < target, rows sorted.
pub fn write_edge_csv(view: &ViewGraph, path: &Path) -> Result<(), NetworkError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    writer.write_record(["source", "target", "weight"]).map_err(csv_err(path))?;
    for (pair, w) in &view.edges {
        writer
            .write_record([pair.lo(), pair.hi(), &w.to_string()])
            .map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))
}

pub fn read_edge_csv(view: ActionType, path: &Path) -> Result<ViewGraph, NetworkError> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut g = ViewGraph::new(view);
    for record in reader.records() {
        let record = record.map_err(csv_err(path))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |reason: String| NetworkError::BadRow { path: path.to_path_buf(), line, reason };
        if record.len() != 3 {
            return Err(bad(format!("expected 3 columns, found {}", record.len())));
        }
        let weight: f64 = record[2].parse().map_err(|_| bad(format!("bad weight {:?}", &record[2])))?;
        if weight.is_nan() || weight <= 0.0 {
            return Err(bad(format!("non-positive weight {weight}")));
        }
        let pair = UserPair::new(&record[0], &record[1]).ok_or_else(|| bad("self-loop".into()))?;
        g.insert(pair, weight);
    }
    Ok(g)
}

/// Reads views previously written by [`export_network`] with edge CSV.
pub fn import_edge_csv(base: &Path, views: &[ActionType]) -> Result<MultiViewNetwork, NetworkError> {
    let views = views
        .iter()
        .map(|&v| read_edge_csv(v, &edge_csv_path(base, v)))
        .collect::<Result<Vec<_>, _>>()?;
    MultiViewNetwork::from_views(views)
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            // Not representable in XML 1.0.
            c if (c as u32) < 0x20 && !matches!(c, '\t' | '\n' | '\r') => out.push('\u{FFFD}'),
            c => out.push(c),
        }
    }
    out
}

/// One GraphML document; one edge element per (pair, view).
pub fn write_graphml<W: Write>(network: &MultiViewNetwork, mut w: W) -> std::io::Result<()> {
    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(w, r#"<graphml xmlns="http://graphml.graphdrawing.org/xmlns">"#)?;
    writeln!(w, r#"  <key id="view" for="edge" attr.name="view" attr.type="string"/>"#)?;
    writeln!(w, r#"  <key id="weight" for="edge" attr.name="weight" attr.type="double"/>"#)?;
    writeln!(w, r#"  <graph id="G" edgedefault="undirected">"#)?;
    for name in network.nodes.names() {
        writeln!(w, r#"    <node id="{}"/>"#, xml_escape(name))?;
    }
    let mut edge_id = 0usize;
    for view in &network.views {
        for (pair, weight) in &view.edges {
            writeln!(
                w,
                r#"    <edge id="e{edge_id}" source="{}" target="{}"><data key="view">{}</data><data key="weight">{weight}</data></edge>"#,
                xml_escape(pair.lo()),
                xml_escape(pair.hi()),
                view.view.name()
            )?;
            edge_id += 1;
        }
    }
    writeln!(w, "  </graph>")?;
    writeln!(w, "</graphml>")?;
    w.flush()
}
