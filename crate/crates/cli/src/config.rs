//! Run configuration: command-line flags layered over an optional JSON file.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use stablegen::{Regime, StableMechanism};

/// Invalid or inconsistent configuration (exit code 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeArg {
    SubCritical,
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON file with defaults; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub b: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub regime: Option<RegimeArg>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub replicas: Option<usize>,
    /// Worker threads for replica fan-out.
    #[arg(long, global = true, env = "STABLEGEN_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Output file (stdout when absent).
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
}

/// Keys accepted in the JSON config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct FileConfig {
    alpha: Option<f64>,
    gamma: Option<f64>,
    b: Option<f64>,
    regime: Option<RegimeArg>,
    seed: Option<u64>,
    replicas: Option<usize>,
    threads: Option<usize>,
    format: Option<Format>,
    output: Option<PathBuf>,
}

/// Fully resolved configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mechanism: StableMechanism,
    pub seed: u64,
    pub replicas: usize,
    pub threads: Option<usize>,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
}

pub const DEFAULT_SEED: u64 = stablegen::acceptance::DEFAULT_SEED;

fn load(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ConfigError(format!("bad config {}: {e}", path.display())))
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs, default_replicas: usize) -> Result<Self, ConfigError> {
        let file = match &args.config {
            Some(p) => load(p)?,
            None => FileConfig::default(),
        };
        let regime = args.regime.or(file.regime).unwrap_or(RegimeArg::SubCritical);
        let default_alpha = match regime {
            RegimeArg::SubCritical => 1.0,
            RegimeArg::Critical => 0.0,
        };
        let alpha = args.alpha.or(file.alpha).unwrap_or(default_alpha);
        let gamma = args.gamma.or(file.gamma).unwrap_or(1.0);
        let b = args.b.or(file.b).unwrap_or(1.5);
        let regime = match regime {
            RegimeArg::SubCritical => Regime::SubCritical,
            RegimeArg::Critical => Regime::Critical,
        };
        let mechanism = StableMechanism::new(alpha, gamma, b, regime).map_err(|e| ConfigError(e.to_string()))?;
        let replicas = args.replicas.or(file.replicas).unwrap_or(default_replicas);
        if replicas == 0 {
            return Err(ConfigError("replicas must be >= 1".into()));
        }
        let threads = args.threads.or(file.threads);
        if threads == Some(0) {
            return Err(ConfigError("threads must be >= 1".into()));
        }
        Ok(RunConfig {
            mechanism,
            seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            replicas,
            threads,
            format: args.format.or(file.format),
            output: args.output.clone().or(file.output),
        })
    }
}
