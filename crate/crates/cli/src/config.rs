//! Run configuration: optional JSON file, flag overrides, canonical hash.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Flags accepted by every subcommand; `None` falls back to the config file,
/// then to the defaults.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct RunArgs {
    /// JSON configuration file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Grid cells per axis.
    #[arg(long)]
    pub n: Option<usize>,
    /// Monte Carlo path count.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trend spec: zero | const:<v> | builtin:<name>[:k=v,...] |
    /// product:<name>,<name>[:k=v,...] | csv:<path>.
    #[arg(long)]
    pub trend: Option<String>,
    /// Boundary spec (same grammar as --trend).
    #[arg(long)]
    pub boundary: Option<String>,
    /// Lower boundary spec for band-based bounds.
    #[arg(long)]
    pub lower: Option<String>,
    /// Comma-separated increasing gamma list for sweeps.
    #[arg(long)]
    pub gammas: Option<String>,
    /// Output directory (default runs/<command>-<config hash>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Solver tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Reduction block size.
    #[arg(long)]
    pub blocks: Option<usize>,
}

/// Config-file mirror of the flags.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct FileConfig {
    pub n: Option<usize>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub trend: Option<String>,
    pub boundary: Option<String>,
    pub lower: Option<String>,
    pub gammas: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub blocks: Option<usize>,
}

/// Fully resolved run configuration; its canonical JSON is hashed into the
/// manifest and the default output directory name.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub command: String,
    pub n: usize,
    pub paths: usize,
    pub seed: u64,
    pub trend: String,
    pub boundary: String,
    pub lower: String,
    pub gammas: Vec<f64>,
    pub tol: f64,
    pub blocks: usize,
}

fn parse_gammas(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| CliError::config(format!("invalid gamma value {tok:?}")))
        })
        .collect()
}

/// Derives the default lower boundary `const:-c` from a constant upper
/// boundary, used when --lower is not given.
fn default_lower(boundary: &str) -> String {
    if let Some(c) = boundary.strip_prefix("const:") {
        if let Ok(v) = c.trim().parse::<f64>() {
            return format!("const:{}", -v);
        }
    }
    "const:-0.5".to_string()
}

pub fn resolve(command: &str, args: &RunArgs) -> Result<(Resolved, Option<PathBuf>), CliError> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::config(format!("cannot read config {}: {e}", path.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("invalid config JSON: {e}")))?
        }
        None => FileConfig::default(),
    };

    let gammas = match (&args.gammas, &file.gammas) {
        (Some(text), _) => parse_gammas(text)?,
        (None, Some(list)) => list.clone(),
        (None, None) => vec![2.0, 4.0, 6.0, 8.0],
    };
    let boundary = args
        .boundary
        .clone()
        .or(file.boundary)
        .unwrap_or_else(|| "const:0.5".to_string());
    let lower = args
        .lower
        .clone()
        .or(file.lower)
        .unwrap_or_else(|| default_lower(&boundary));

    let resolved = Resolved {
        command: command.to_string(),
        n: args.n.or(file.n).unwrap_or(16),
        paths: args.paths.or(file.paths).unwrap_or(100_000),
        seed: args.seed.or(file.seed).unwrap_or(1),
        trend: args.trend.clone().or(file.trend).unwrap_or_else(|| "zero".to_string()),
        boundary,
        lower,
        gammas,
        tol: args.tol.or(file.tol).unwrap_or(1e-8),
        blocks: args.blocks.or(file.blocks).unwrap_or(4096),
    };
    if resolved.n < 2 {
        return Err(CliError::config(format!("n must be at least 2, got {}", resolved.n)));
    }
    if resolved.paths == 0 {
        return Err(CliError::config("paths must be positive".to_string()));
    }
    let out = args.out.clone().or(file.out);
    Ok((resolved, out))
}

/// Hex SHA-256 of the canonical (field-ordered) JSON of the configuration.
pub fn config_hash(resolved: &Resolved) -> String {
    let canonical = serde_json::to_string(resolved).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
