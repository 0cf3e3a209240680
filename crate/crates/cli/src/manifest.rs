use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use oemsim_core::Finding;

use crate::error::{io_err, Result};
use crate::pipeline::{execute, Outcome, Outputs};
use crate::scenario::LoadedScenario;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub scenario: String,
    pub scenario_file: PathBuf,
    /// SHA-256 of the scenario file bytes.
    pub scenario_hash: String,
    pub library_version: String,
    pub wall_time_s: f64,
    pub findings: Vec<Finding>,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_entry(dir: &Path, rel: &Path) -> Result<FileEntry> {
    let full = dir.join(rel);
    let bytes = std::fs::read(&full).map_err(io_err(&full))?;
    Ok(FileEntry {
        path: rel.to_path_buf(),
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&bytes),
    })
}

/// Runs a loaded scenario into `out_dir` and writes the manifest there.
pub fn run_scenario(loaded: &LoadedScenario, out_dir: &Path) -> Result<(RunManifest, Outcome)> {
    let start = Instant::now();
    let mut out = Outputs::new(out_dir)?;
    let (outcome, findings) = execute(&loaded.scenario, &loaded.source, &mut out)?;
    let files = out
        .files
        .iter()
        .map(|rel| file_entry(out_dir, rel))
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        scenario: loaded.scenario.name.clone(),
        scenario_file: loaded.path.clone(),
        scenario_hash: sha256_hex(loaded.source.as_bytes()),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        findings,
        files,
    };
    let path = out_dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok((manifest, outcome))
}
