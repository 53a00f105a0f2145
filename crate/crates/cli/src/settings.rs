//! Option resolution: command line, then the config file, then defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use syncnet::actions::ActionType;

/// Keys match the long flag names.
#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileSettings {
    pub window_seconds: Option<u64>,
    pub views: Option<String>,
    pub min_weight: Option<f64>,
    pub resolution: Option<f64>,
    pub coupling: Option<f64>,
    pub seed: Option<u64>,
    pub include_retweets: Option<bool>,
    pub downweight_popular: Option<bool>,
    pub threads: Option<usize>,
    pub window_method: Option<String>,
    pub min_size: Option<usize>,
    pub strict: Option<bool>,
}

impl FileSettings {
    pub fn read(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Fully resolved options.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub window_seconds: u64,
    pub views: Vec<ActionType>,
    pub min_weight: f64,
    pub resolution: f64,
    pub coupling: f64,
    pub seed: u64,
    pub include_retweets: bool,
    pub downweight_popular: bool,
    pub threads: Option<usize>,
    pub window_method: String,
    pub min_size: usize,
    pub strict: bool,
}

pub const DEFAULT_VIEWS: &str = "hashtag,url,mention";

impl Settings {
    /// `cli` holds only what was given on the command line.
    pub fn resolve(cli: &FileSettings, file: &FileSettings) -> Result<Self, String> {
        let views = cli.views.clone().or_else(|| file.views.clone()).unwrap_or_else(|| DEFAULT_VIEWS.into());
        let views = ActionType::parse_list(&views).map_err(|e| e.to_string())?;
        let flag = |c: Option<bool>, f: Option<bool>| c.or(f).unwrap_or(false);
        Ok(Settings {
            window_seconds: cli.window_seconds.or(file.window_seconds).unwrap_or(300),
            views,
            min_weight: cli.min_weight.or(file.min_weight).unwrap_or(1.0),
            resolution: cli.resolution.or(file.resolution).unwrap_or(1.0),
            coupling: cli.coupling.or(file.coupling).unwrap_or(1.0),
            seed: cli.seed.or(file.seed).unwrap_or(42),
            include_retweets: flag(cli.include_retweets, file.include_retweets),
            downweight_popular: flag(cli.downweight_popular, file.downweight_popular),
            threads: cli.threads.or(file.threads),
            window_method: cli
                .window_method
                .clone()
                .or_else(|| file.window_method.clone())
                .unwrap_or_else(|| "sliding".into()),
            min_size: cli.min_size.or(file.min_size).unwrap_or(2),
            strict: flag(cli.strict, file.strict),
        })
    }
}

pub fn load(cli: &FileSettings, config: Option<&PathBuf>) -> Result<Settings, String> {
    let file = match config {
        Some(path) => FileSettings::read(path)?,
        None => FileSettings::default(),
    };
    Settings::resolve(cli, &file)
}
