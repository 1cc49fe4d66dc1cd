//! Reproducible command-line runs over the `perlat` library.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{Command, RunConfig};
pub use error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Parser)]
#[command(name = "perlat", version, about = "Gaussian perturbed lattices: simulate, estimate, fit and test")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[command(flatten)]
    pub shared: SharedArgs,
}

#[derive(Debug, Default, Args)]
pub struct SharedArgs {
    /// JSON run config (or a previous run manifest to replay).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Point CSV for data-consuming commands.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Window JSON `{"min": [...], "max": [...]}`.
    #[arg(long)]
    pub window: Option<PathBuf>,
    /// Model JSON `{"kind": "iid" | "powexp" | "stationarized", ...}`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub n_sims: Option<usize>,
    /// Also write a gnuplot script for the curve outputs.
    #[arg(long)]
    pub gnuplot: bool,
}

/// Merges command-line flags over the config file.
pub fn resolve_config(command: Command, args: &SharedArgs) -> CliResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    cfg.command = command;
    if let Some(d) = args.dim {
        cfg.dim = d;
    }
    if let Some(s) = args.seed {
        cfg.seed = Some(perlat::SeedSpec::new(s, 0));
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    if let Some(i) = &args.input {
        cfg.input = Some(i.clone());
    }
    if let Some(w) = &args.window {
        cfg.window = Some(io::read_window(w)?);
    }
    if let Some(m) = &args.model {
        let text = std::fs::read_to_string(m).map_err(|source| CliError::Io {
            path: m.clone(),
            source,
        })?;
        cfg.model = Some(serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", m.display())))?);
    }
    if let Some(n) = args.n_sims {
        cfg.n_sims = Some(n);
    }
    if args.gnuplot {
        cfg.gnuplot = true;
    }
    if cfg.seed.is_none() && cfg.command.is_randomized() {
        let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_nanos() as u64);
        cfg.seed = Some(perlat::SeedSpec::new(nanos, 0));
    }
    Ok(cfg)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    /// SHA-256 of every output, keyed by file name.
    pub outputs: BTreeMap<String, String>,
    pub extra: BTreeMap<String, serde_json::Value>,
    pub wall_time_s: f64,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Validates the config, runs the command and writes the manifest.
pub fn run(cfg: &RunConfig) -> CliResult<Manifest> {
    cfg.validate()?;
    let start = Instant::now();
    let art = commands::execute(cfg)?;
    let mut outputs = BTreeMap::new();
    for f in &art.files {
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        outputs.insert(name, sha256_file(f)?);
    }
    let manifest = Manifest {
        tool: "perlat".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        outputs,
        extra: art.extra,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    io::write_json(&cfg.out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Runs and converts failures into an exit status, writing the error JSON
/// to stderr and, when possible, to `error.json` in the output directory.
pub fn run_to_exit(cfg: Result<RunConfig, CliError>) -> i32 {
    let out = cfg.as_ref().ok().map(|c| c.out.clone());
    let Err(e) = cfg.and_then(|c| run(&c)) else {
        return 0;
    };
    let report = e.report();
    let text = serde_json::to_string(&report).unwrap_or_else(|_| e.to_string());
    eprintln!("{text}");
    if let Some(dir) = out.filter(|d| d.is_dir()) {
        let _ = io::write_json(&dir.join("error.json"), &report);
    }
    e.exit_code()
}
