//! Scenario runner for the oemsim quantum-memory simulator.
//!
//! A scenario is a TOML file naming a run kind (`steady`, `transient`,
//! `protocol`, `optimize` or `sweep`) plus the parameter, schedule, grid and
//! probe sections it needs. Runs write plot-ready CSV, JSON summaries and a
//! manifest with SHA-256 hashes of everything emitted.

pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod scenario;
pub mod validate;

pub use error::{CliError, Result};
pub use manifest::{run_scenario, RunManifest};
pub use scenario::{load, parse, LoadedScenario, Scenario};

use std::path::{Path, PathBuf};

/// Output directory: `OEMSIM_OUT` wins over `--out`, which wins over the
/// scenario's `output_dir`, which defaults to `out/<name>`.
pub fn resolve_out_dir(env: Option<&str>, flag: Option<&Path>, sc: &Scenario) -> PathBuf {
    if let Some(e) = env.filter(|e| !e.is_empty()) {
        return PathBuf::from(e);
    }
    if let Some(f) = flag {
        return f.to_path_buf();
    }
    sc.output_dir.clone().unwrap_or_else(|| Path::new("out").join(&sc.name))
}
