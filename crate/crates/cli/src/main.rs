mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use syncnet::actions::ActionType;
use syncnet::cluster::ClusterParams;
use syncnet::gen::Scenario;
use syncnet::network::ExportFormat;
use syncnet::pipeline::{self, BuildConfig, ClusterConfig, EgoConfig, PipelineError, RankConfig};
use syncnet::window::{TieBreak, WindowConfig, WindowMethod};

use settings::{FileSettings, Settings};

#[derive(Parser, Debug)]
#[command(name = "syncnet", version, about = "Find accounts that act in lockstep across hashtags, URLs and mentions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    options: Options,
}

/// Shared tuning flags. Any of them may also come from `--config`.
#[derive(Args, Debug, Default)]
struct Options {
    /// TOML file whose keys are the long flag names.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Co-occurrence window in seconds [default: 300]
    #[arg(long, global = true)]
    window_seconds: Option<u64>,
    /// Comma-separated views, e.g. hashtag,url,mention or hashtag-url [default: hashtag,url,mention]
    #[arg(long, global = true)]
    views: Option<String>,
    /// Drop edges lighter than this [default: 1]
    #[arg(long, global = true)]
    min_weight: Option<f64>,
    /// Modularity resolution [default: 1.0]
    #[arg(long, global = true)]
    resolution: Option<f64>,
    /// Inter-view coupling [default: 1.0]
    #[arg(long, global = true)]
    coupling: Option<f64>,
    /// [default: 42]
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    include_retweets: bool,
    /// Scale each increment by 1/log2(1 + group size).
    #[arg(long, global = true)]
    downweight_popular: bool,
    /// Worker threads for the window stage.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// sliding or fixed [default: sliding]
    #[arg(long, global = true)]
    window_method: Option<String>,
    /// Smallest cluster considered for the densest one [default: 2]
    #[arg(long, global = true)]
    min_size: Option<usize>,
    /// Abort on the first malformed record.
    #[arg(long, global = true)]
    strict: bool,
}

impl Options {
    fn given(&self) -> FileSettings {
        FileSettings {
            window_seconds: self.window_seconds,
            views: self.views.clone(),
            min_weight: self.min_weight,
            resolution: self.resolution,
            coupling: self.coupling,
            seed: self.seed,
            include_retweets: self.include_retweets.then_some(true),
            downweight_popular: self.downweight_popular.then_some(true),
            threads: self.threads,
            window_method: self.window_method.clone(),
            min_size: self.min_size,
            strict: self.strict.then_some(true),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the multi-view network from JSONL corpora.
    Build {
        #[arg(long = "input", short, required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Cluster a built network and report on its densest cluster.
    Cluster {
        #[arg(long)]
        network: PathBuf,
        /// Defaults to the network directory.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Centrality report for one cluster.
    Rank {
        #[arg(long)]
        network: PathBuf,
        /// Defaults to clustering.csv in the network directory.
        #[arg(long)]
        clustering: Option<PathBuf>,
        /// Defaults to the densest cluster.
        #[arg(long)]
        cluster: Option<usize>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Export the neighborhood of one user.
    Ego {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long, default_value_t = 1)]
        radius: u32,
        /// graphml, edge-csv, or both comma-separated.
        #[arg(long, default_value = "graphml,edge-csv")]
        format: String,
        /// Path prefix of the exported files.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Re-export a built network.
    Export {
        #[arg(long)]
        network: PathBuf,
        #[arg(long, default_value = "graphml,edge-csv")]
        format: String,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus with planted campaigns.
    Simulate {
        /// TOML scenario file.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Print the summary of a build (and of its clustering, if any).
    Report {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        clustering: Option<PathBuf>,
    },
}

fn formats(list: &str) -> Result<Vec<ExportFormat>, PipelineError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(PipelineError::Config))
        .collect()
}

fn names(views: &[ActionType]) -> Vec<&'static str> {
    views.iter().map(|v| v.name()).collect()
}

fn paths(files: &[PathBuf]) -> Value {
    files.iter().map(|p| Value::String(p.display().to_string())).collect()
}

fn window_method(name: &str) -> Result<WindowMethod, PipelineError> {
    match name {
        "sliding" => Ok(WindowMethod::Sliding),
        "fixed" => Ok(WindowMethod::Fixed),
        other => Err(PipelineError::Config(format!("unknown window method {other:?}"))),
    }
}

fn params(s: &Settings) -> ClusterParams {
    ClusterParams { resolution: s.resolution, coupling: s.coupling, seed: s.seed }
}

fn read_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            PipelineError::NotFound { path: path.to_path_buf() }
        } else {
            PipelineError::Io { path: path.to_path_buf(), source }
        }
    })?;
    let mut scenario: Scenario =
        toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn run(cli: Cli) -> Result<Value, PipelineError> {
    let given = cli.options.given();
    let s = settings::load(&given, cli.options.config.as_ref()).map_err(PipelineError::Config)?;
    match cli.command {
        Command::Build { inputs, out } => {
            let config = BuildConfig {
                inputs,
                views: s.views.clone(),
                window: WindowConfig {
                    window_seconds: s.window_seconds,
                    tie_break: TieBreak::default(),
                    popularity_downweight: s.downweight_popular,
                },
                method: window_method(&s.window_method)?,
                min_weight: s.min_weight,
                include_retweets: s.include_retweets,
                strict: s.strict,
                threads: s.threads,
                output_dir: out,
            };
            let outcome = pipeline::run_build(&config)?;
            Ok(json!({
                "command": "build",
                "files": paths(&outcome.files),
                "tweets": outcome.tweets,
                "ingest_errors": outcome.ingest_errors,
                "nodes": outcome.nodes,
                "edges": outcome.edges,
            }))
        }
        Command::Cluster { network, out } => {
            let config = ClusterConfig { network_dir: network, output_dir: out, params: params(&s), min_size: s.min_size };
            let outcome = pipeline::run_cluster(&config)?;
            Ok(json!({
                "command": "cluster",
                "files": paths(&outcome.files),
                "clusters": outcome.clusters,
                "objective": outcome.objective,
                "densest": outcome.densest,
                "densest_size": outcome.densest_size,
                "densest_density": outcome.densest_density,
                "eigenvector_unconverged": names(&outcome.eigenvector_unconverged),
            }))
        }
        Command::Rank { network, clustering, cluster, out } => {
            let config = RankConfig { network_dir: network, clustering, cluster, min_size: s.min_size, output: out.clone() };
            let report = pipeline::run_rank(&config)?;
            Ok(json!({
                "command": "rank",
                "files": paths(&[out]),
                "cluster": report.cluster,
                "members": report.rows.len(),
                "eigenvector_unconverged": names(&report.unconverged),
            }))
        }
        Command::Ego { network, user, radius, format, out } => {
            let config = EgoConfig { network_dir: network, user, radius, formats: formats(&format)?, output: out };
            let outcome = pipeline::run_ego(&config)?;
            Ok(json!({
                "command": "ego",
                "files": paths(&outcome.files),
                "nodes": outcome.nodes,
                "edges": outcome.edges,
            }))
        }
        Command::Export { network, format, out } => {
            let views = cli.options.views.as_ref().map(|_| s.views.clone());
            let files = pipeline::run_export(&network, views.as_deref(), &formats(&format)?, &out)?;
            Ok(json!({ "command": "export", "files": paths(&files) }))
        }
        Command::Simulate { scenario, out } => {
            let scenario = read_scenario(&scenario, given.seed)?;
            let files = pipeline::run_simulate(&scenario, &out)?;
            Ok(json!({ "command": "simulate", "files": paths(&files) }))
        }
        Command::Report { network, clustering } => {
            let text = pipeline::run_report(&network, clustering.as_deref())?;
            print!("{text}");
            Ok(Value::Null)
        }
    }
}

fn fail(kind: &str, message: &str, code: i32) -> ExitCode {
    let line = json!({ "error": kind, "message": message, "exit_code": code });
    eprintln!("{line}");
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim(), 2),
    };
    match run(cli) {
        Ok(Value::Null) => ExitCode::SUCCESS,
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), &e.to_string(), e.exit_code()),
    }
}
