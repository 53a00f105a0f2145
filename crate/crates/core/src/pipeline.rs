//! Batch commands over files: build a network from corpora, cluster it,
//! rank a cluster, cut ego networks, re-export, simulate, summarize.
//!
//! A build directory holds `manifest.json`, one `network.<view>.csv` per
//! view, `network.graphml`, `ingest_errors.csv` and `summary.txt`. Every
//! file is a pure function of the inputs and the configuration.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{extract_all, ActionType, RetweetPolicy};
use crate::cluster::{self, ClusterError, ClusterParams, Clustering};
use crate::gen::{self, GenError, Scenario};
use crate::ingest::{self, IngestError, ParseOptions, RecordError, Tweet};
use crate::metrics::{self, MetricsError};
use crate::network::{self, ExportFormat, MultiViewNetwork, NetworkError, StrengthMode};
use crate::window::{build_view, WindowConfig, WindowError, WindowMethod};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const NETWORK_BASE: &str = "network";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const INGEST_ERRORS_FILE: &str = "ingest_errors.csv";
pub const CLUSTERING_FILE: &str = "clustering.csv";
pub const DENSEST_MEMBERS_FILE: &str = "densest_members.csv";
pub const DENSEST_REPORT_FILE: &str = "densest_report.csv";

pub const CAVEAT: &str =
    "Note: synchronized activity marks accounts as suspicious; it is not evidence that they are affiliated.";

const SUMMARY_TOP_EDGES: usize = 10;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: not found")]
    NotFound { path: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Config(String),
    #[error("no valid tweets in the input ({errors} bad records)")]
    NoTweets { errors: usize },
    #[error("{path}: bad manifest: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Gen(#[from] GenError),
}

impl PipelineError {
    /// Short stable name for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::NotFound { .. } => "not_found",
            PipelineError::Io { .. } => "io",
            PipelineError::Config(_) => "config",
            PipelineError::NoTweets { .. } => "no_tweets",
            PipelineError::Manifest { .. } => "manifest",
            PipelineError::Ingest(_) => "ingest",
            PipelineError::Window(_) => "window",
            PipelineError::Network(NetworkError::UnknownUser(_)) => "unknown_user",
            PipelineError::Network(_) => "network",
            PipelineError::Cluster(ClusterError::EmptyNetwork) => "empty_network",
            PipelineError::Cluster(_) => "cluster",
            PipelineError::Metrics(MetricsError::UnknownUser(_)) => "unknown_user",
            PipelineError::Metrics(_) => "metrics",
            PipelineError::Gen(_) => "scenario",
        }
    }

    /// 2 bad configuration, 3 missing input, 4 nothing to work on,
    /// 5 unknown user, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" | "scenario" => 2,
            "not_found" => 3,
            "no_tweets" | "empty_network" => 4,
            "unknown_user" => 5,
            _ => 1,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            PipelineError::NotFound { path: path.to_path_buf() }
        } else {
            PipelineError::Io { path: path.to_path_buf(), source }
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    pub inputs: Vec<PathBuf>,
    pub views: Vec<ActionType>,
    pub window: WindowConfig,
    pub method: WindowMethod,
    pub min_weight: f64,
    pub include_retweets: bool,
    pub strict: bool,
    /// Worker threads for the window stage; `None` uses rayon's default.
    pub threads: Option<usize>,
    pub output_dir: PathBuf,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            inputs: Vec::new(),
            views: ActionType::STANDARD.to_vec(),
            window: WindowConfig::default(),
            method: WindowMethod::Sliding,
            min_weight: 1.0,
            include_retweets: false,
            strict: false,
            threads: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(PipelineError::Config("no input files given".into()));
        }
        if self.views.is_empty() {
            return Err(PipelineError::Config("at least one view must be selected".into()));
        }
        let distinct: BTreeSet<_> = self.views.iter().collect();
        if distinct.len() != self.views.len() {
            return Err(PipelineError::Config("a view is listed twice".into()));
        }
        if self.threads == Some(0) {
            return Err(PipelineError::Config("threads must be at least 1".into()));
        }
        self.window.validate()?;
        Ok(())
    }
}

/// What a build directory was made from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub views: Vec<ActionType>,
    pub window_seconds: u64,
    pub method: String,
    pub downweight_popular: bool,
    pub min_weight: f64,
    pub include_retweets: bool,
    pub tweets: usize,
    pub ingest_errors: usize,
    /// Action events per view, in view order.
    pub events: Vec<usize>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST_FILE);
        let file = File::open(&path).map_err(io_err(&path))?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| PipelineError::Manifest { path: path.clone(), reason: e.to_string() })
    }

    fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, self)
            .map_err(|e| PipelineError::Io { path: path.clone(), source: e.into() })?;
        writeln!(w).and_then(|_| w.flush()).map_err(io_err(&path))?;
        Ok(path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOutcome {
    pub files: Vec<PathBuf>,
    pub tweets: usize,
    pub ingest_errors: usize,
    pub nodes: usize,
    pub edges: Vec<usize>,
}

/// Source file name (not the full path) so reports do not depend on where
/// the inputs live.
fn source_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

struct Loaded {
    tweets: Vec<Tweet>,
    errors: Vec<(String, RecordError)>,
}

fn load_corpora(inputs: &[PathBuf], strict: bool) -> Result<Loaded> {
    let mut loaded = Loaded { tweets: Vec::new(), errors: Vec::new() };
    let mut seen = BTreeSet::new();
    for path in inputs {
        let file = File::open(path).map_err(io_err(path))?;
        let report = ingest::parse_corpus(BufReader::new(file), ParseOptions { strict })?;
        let source = source_name(path);
        for err in report.errors {
            loaded.errors.push((source.clone(), err));
        }
        // Line numbers are not kept on tweets; duplicates across files are
        // reported against the tweet's position among the file's valid rows.
        for (i, tweet) in report.tweets.into_iter().enumerate() {
            if seen.insert(tweet.tweet_id.clone()) {
                loaded.tweets.push(tweet);
            } else {
                let reason = format!("duplicate id {:?} (valid record {} of this file)", tweet.tweet_id, i + 1);
                if strict {
                    return Err(IngestError::Record { line: 0, reason }.into());
                }
                loaded.errors.push((source.clone(), RecordError { line_number: 0, reason }));
            }
        }
    }
    Ok(loaded)
}

fn write_ingest_errors(path: &Path, errors: &[(String, RecordError)]) -> Result<()> {
    let w = create(path)?;
    let mut csv = csv::Writer::from_writer(w);
    let wrap = |e: csv::Error| PipelineError::Io { path: path.to_path_buf(), source: e.into() };
    csv.write_record(["source", "line_number", "reason"]).map_err(wrap)?;
    for (source, err) in errors {
        csv.write_record([source.as_str(), &err.line_number.to_string(), &err.reason])
            .map_err(wrap)?;
    }
    csv.flush().map_err(io_err(path))
}

fn method_name(method: WindowMethod) -> &'static str {
    match method {
        WindowMethod::Sliding => "sliding",
        WindowMethod::Fixed => "fixed",
    }
}

/// Ingest, extract actions, window and assemble; writes the build directory.
pub fn run_build(config: &BuildConfig) -> Result<BuildOutcome> {
    config.validate()?;
    let loaded = load_corpora(&config.inputs, config.strict)?;
    if loaded.tweets.is_empty() {
        return Err(PipelineError::NoTweets { errors: loaded.errors.len() });
    }
    let policy = if config.include_retweets { RetweetPolicy::Include } else { RetweetPolicy::Exclude };
    let events = extract_all(&loaded.tweets, &config.views, policy);

    let window_stage = || -> Result<_, WindowError> {
        config
            .views
            .iter()
            .map(|kind| Ok((*kind, build_view(&events[kind], &config.window, config.method)?)))
            .collect::<Result<std::collections::BTreeMap<_, _>, _>>()
    };
    let accumulators = match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| PipelineError::Config(format!("cannot start {n} threads: {e}")))?
            .install(window_stage)?,
        None => window_stage()?,
    };
    let mut network = network::assemble(&accumulators, config.min_weight)?;
    network = reorder_views(network, &config.views)?;

    let dir = &config.output_dir;
    create_dir(dir)?;
    let base = dir.join(NETWORK_BASE);
    let mut files = network::export_network(&network, ExportFormat::EdgeCsv, &base)?;
    files.extend(network::export_network(&network, ExportFormat::GraphMl, &base)?);

    let errors_path = dir.join(INGEST_ERRORS_FILE);
    write_ingest_errors(&errors_path, &loaded.errors)?;
    files.push(errors_path);

    let manifest = Manifest {
        views: config.views.clone(),
        window_seconds: config.window.window_seconds,
        method: method_name(config.method).to_string(),
        downweight_popular: config.window.popularity_downweight,
        min_weight: config.min_weight,
        include_retweets: config.include_retweets,
        tweets: loaded.tweets.len(),
        ingest_errors: loaded.errors.len(),
        events: config.views.iter().map(|k| events[k].len()).collect(),
    };
    files.push(manifest.write(dir)?);

    let summary_path = dir.join(SUMMARY_FILE);
    let mut w = create(&summary_path)?;
    w.write_all(summary(&network, &manifest).as_bytes())
        .and_then(|_| w.flush())
        .map_err(io_err(&summary_path))?;
    files.push(summary_path);

    Ok(BuildOutcome {
        files,
        tweets: manifest.tweets,
        ingest_errors: manifest.ingest_errors,
        nodes: network.node_count(),
        edges: network.views().iter().map(|v| v.edge_count()).collect(),
    })
}

/// `assemble` orders views by type; builds keep the order the user asked for.
fn reorder_views(network: MultiViewNetwork, order: &[ActionType]) -> Result<MultiViewNetwork> {
    let views = order
        .iter()
        .map(|k| network.view(*k).cloned().expect("every requested view was built"))
        .collect();
    Ok(MultiViewNetwork::from_views(views)?)
}

fn fmt_weight(w: f64) -> String {
    if w.fract() == 0.0 {
        format!("{w}")
    } else {
        format!("{w:.4}")
    }
}

/// Human-readable digest of a build. Contains no paths or clock times.
pub fn summary(network: &MultiViewNetwork, manifest: &Manifest) -> String {
    let mut s = String::new();
    let views: Vec<&str> = manifest.views.iter().map(|v| v.name()).collect();
    let _ = writeln!(s, "views: {}", views.join(","));
    let _ = writeln!(
        s,
        "window: {} seconds ({}{})",
        manifest.window_seconds,
        manifest.method,
        if manifest.downweight_popular { ", popular actions down-weighted" } else { "" }
    );
    let _ = writeln!(s, "min weight: {}", manifest.min_weight);
    let _ = writeln!(
        s,
        "tweets: {} ({} bad records, retweets {})",
        manifest.tweets,
        manifest.ingest_errors,
        if manifest.include_retweets { "included" } else { "excluded" }
    );
    let _ = writeln!(s, "users with at least one edge: {}", network.node_count());
    let _ = writeln!(s);
    for (i, view) in network.views().iter().enumerate() {
        let events = manifest.events.get(i).copied().unwrap_or(0);
        let _ = writeln!(
            s,
            "{}: {} events, {} nodes, {} edges, total weight {}",
            view.view.name(),
            events,
            view.nodes().len(),
            view.edge_count(),
            fmt_weight(view.total_weight())
        );
    }
    let top = network::strongest_edges(network, SUMMARY_TOP_EDGES, StrengthMode::Averaged);
    let _ = writeln!(s);
    if top.is_empty() {
        let _ = writeln!(s, "no edges");
    } else {
        let _ = writeln!(s, "strongest edges (mean weight across views; per view {}):", views.join("/"));
        for (rank, edge) in top.iter().enumerate() {
            let per_view: Vec<String> = edge.weights.iter().map(|&w| fmt_weight(w)).collect();
            let _ = writeln!(
                s,
                "{:>3}. {} -- {}  {}  [{}]",
                rank + 1,
                edge.pair.lo(),
                edge.pair.hi(),
                fmt_weight(edge.score),
                per_view.join(" ")
            );
        }
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{CAVEAT}");
    s
}

/// Loads the network stored in a build directory.
pub fn load_network(dir: &Path) -> Result<(MultiViewNetwork, Manifest)> {
    let manifest = Manifest::read(dir)?;
    let base = dir.join(NETWORK_BASE);
    for &view in &manifest.views {
        let path = network::edge_csv_path(&base, view);
        if !path.exists() {
            return Err(PipelineError::NotFound { path });
        }
    }
    let network = network::import_edge_csv(&base, &manifest.views)?;
    Ok((network, manifest))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub network_dir: PathBuf,
    /// Defaults to the network directory.
    pub output_dir: Option<PathBuf>,
    pub params: ClusterParams,
    pub min_size: usize,
}

impl ClusterConfig {
    pub fn new(network_dir: impl Into<PathBuf>) -> Self {
        ClusterConfig {
            network_dir: network_dir.into(),
            output_dir: None,
            params: ClusterParams::default(),
            min_size: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutcome {
    pub files: Vec<PathBuf>,
    pub clusters: usize,
    pub objective: f64,
    pub densest: usize,
    pub densest_size: usize,
    pub densest_density: f64,
    /// Views whose eigenvector scores in the report are unconverged.
    pub eigenvector_unconverged: Vec<ActionType>,
}

fn write_members(path: &Path, clustering: &Clustering, cluster: usize) -> Result<()> {
    let w = create(path)?;
    let mut csv = csv::Writer::from_writer(w);
    let wrap = |e: csv::Error| PipelineError::Io { path: path.to_path_buf(), source: e.into() };
    csv.write_record(["user_id"]).map_err(wrap)?;
    for user in clustering.members(cluster) {
        csv.write_record([&**user]).map_err(wrap)?;
    }
    csv.flush().map_err(io_err(path))
}

fn write_report(path: &Path, report: &metrics::CentralityReport) -> Result<()> {
    let mut w = create(path)?;
    report.write_csv(&mut w)?;
    w.flush().map_err(io_err(path))
}

/// Clusters a built network, then reports on its densest cluster.
pub fn run_cluster(config: &ClusterConfig) -> Result<ClusterOutcome> {
    let (network, _) = load_network(&config.network_dir)?;
    let clustering = cluster::multiview_cluster(&network, config.params)?;
    let dir = config.output_dir.clone().unwrap_or_else(|| config.network_dir.clone());
    create_dir(&dir)?;

    let clustering_path = dir.join(CLUSTERING_FILE);
    let mut w = create(&clustering_path)?;
    clustering.write_csv(&mut w)?;
    w.flush().map_err(io_err(&clustering_path))?;
    let mut files = vec![clustering_path];

    let densest = cluster::densest_cluster(&network, &clustering, config.min_size)?;
    let members_path = dir.join(DENSEST_MEMBERS_FILE);
    write_members(&members_path, &clustering, densest)?;
    files.push(members_path);

    let report = metrics::rank_cluster(&network, &clustering, densest)?;
    let report_path = dir.join(DENSEST_REPORT_FILE);
    write_report(&report_path, &report)?;
    files.push(report_path);

    Ok(ClusterOutcome {
        files,
        clusters: clustering.num_clusters(),
        objective: clustering.objective,
        densest,
        densest_size: clustering.size(densest),
        densest_density: cluster::cluster_density(&network, &clustering, densest)?,
        eigenvector_unconverged: report.unconverged,
    })
}

pub fn read_clustering(path: &Path) -> Result<Clustering> {
    let file = File::open(path).map_err(io_err(path))?;
    Ok(Clustering::read_csv(BufReader::new(file))?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankConfig {
    pub network_dir: PathBuf,
    /// Defaults to `clustering.csv` in the network directory.
    pub clustering: Option<PathBuf>,
    /// Defaults to the densest cluster of at least `min_size` members.
    pub cluster: Option<usize>,
    pub min_size: usize,
    pub output: PathBuf,
}

/// Centrality report for one cluster of an existing clustering.
pub fn run_rank(config: &RankConfig) -> Result<metrics::CentralityReport> {
    let (network, _) = load_network(&config.network_dir)?;
    let path = config.clustering.clone().unwrap_or_else(|| config.network_dir.join(CLUSTERING_FILE));
    let clustering = read_clustering(&path)?;
    let target = match config.cluster {
        Some(c) => c,
        None => cluster::densest_cluster(&network, &clustering, config.min_size)?,
    };
    let report = metrics::rank_cluster(&network, &clustering, target)?;
    if let Some(parent) = config.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_report(&config.output, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoConfig {
    pub network_dir: PathBuf,
    pub user: String,
    pub radius: u32,
    pub formats: Vec<ExportFormat>,
    /// Path prefix for the exported files.
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoOutcome {
    pub files: Vec<PathBuf>,
    pub nodes: usize,
    pub edges: Vec<usize>,
}

pub fn run_ego(config: &EgoConfig) -> Result<EgoOutcome> {
    let (network, _) = load_network(&config.network_dir)?;
    let ego = network::ego(&network, &config.user, config.radius)?;
    let files = export_all(&ego, &config.formats, &config.output)?;
    Ok(EgoOutcome {
        files,
        nodes: ego.node_count(),
        edges: ego.views().iter().map(|v| v.edge_count()).collect(),
    })
}

fn export_all(network: &MultiViewNetwork, formats: &[ExportFormat], base: &Path) -> Result<Vec<PathBuf>> {
    if formats.is_empty() {
        return Err(PipelineError::Config("no export format given".into()));
    }
    if let Some(parent) = base.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut files = Vec::new();
    for &format in formats {
        files.extend(network::export_network(network, format, base)?);
    }
    Ok(files)
}

/// Re-exports a built network, optionally restricted to some views.
pub fn run_export(
    network_dir: &Path,
    views: Option<&[ActionType]>,
    formats: &[ExportFormat],
    output: &Path,
) -> Result<Vec<PathBuf>> {
    let (network, _) = load_network(network_dir)?;
    let network = match views {
        None => network,
        Some(views) => {
            let picked = views
                .iter()
                .map(|k| {
                    network
                        .view(*k)
                        .cloned()
                        .ok_or_else(|| PipelineError::Config(format!("view {k} is not in the build")))
                })
                .collect::<Result<Vec<_>>>()?;
            MultiViewNetwork::from_views(picked)?
        }
    };
    export_all(&network, formats, output)
}

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const LABELS_FILE: &str = "labels.csv";

/// Writes `corpus.jsonl` and `labels.csv` for a scenario.
pub fn run_simulate(scenario: &Scenario, output_dir: &Path) -> Result<Vec<PathBuf>> {
    let corpus = gen::generate(scenario)?;
    create_dir(output_dir)?;
    let corpus_path = output_dir.join(CORPUS_FILE);
    let mut w = create(&corpus_path)?;
    ingest::write_corpus(&corpus.tweets, &mut w)
        .and_then(|_| w.flush())
        .map_err(io_err(&corpus_path))?;
    let labels_path = output_dir.join(LABELS_FILE);
    corpus.write_labels(create(&labels_path)?).map_err(io_err(&labels_path))?;
    Ok(vec![corpus_path, labels_path])
}

/// The build summary, plus cluster statistics when a clustering exists.
pub fn run_report(network_dir: &Path, clustering: Option<&Path>) -> Result<String> {
    let (network, manifest) = load_network(network_dir)?;
    let mut s = summary(&network, &manifest);
    let default_path = network_dir.join(CLUSTERING_FILE);
    let path = match clustering {
        Some(p) => Some(p.to_path_buf()),
        None => Some(default_path).filter(|p| p.exists()),
    };
    if let Some(path) = path {
        let clustering = read_clustering(&path)?;
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "clusters: {} (objective {:.6}, resolution {}, coupling {}, seed {})",
            clustering.num_clusters(),
            clustering.objective,
            clustering.params.resolution,
            clustering.params.coupling,
            clustering.params.seed
        );
        let mut sizes: Vec<(usize, usize)> =
            (0..clustering.num_clusters()).map(|c| (clustering.size(c), c)).collect();
        sizes.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(size, c) in sizes.iter().take(SUMMARY_TOP_EDGES) {
            let density = cluster::cluster_density(&network, &clustering, c)?;
            let _ = writeln!(s, "  cluster {c}: {size} users, density {density:.4}");
        }
        if let Ok(densest) = cluster::densest_cluster(&network, &clustering, 2) {
            let _ = writeln!(s, "densest cluster: {densest}");
        }
    }
    Ok(s)
}
