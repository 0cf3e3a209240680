//! Summary tables regenerated from existing run outputs.

use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::{io_err, CliError, Result};

const COLUMNS: [&str; 8] = [
    "optical_depth",
    "eta_s",
    "eta_r",
    "eta_r_conditional",
    "eta_total",
    "leak",
    "decay_loss",
    "ledger_residual_storage",
];

fn find_reports(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()).map_err(io_err(dir)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_reports(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "report.json") {
            out.push(p);
        }
    }
    Ok(())
}

/// Collects every `report.json` below `dir` into `dir/summary.csv`, one row
/// per run ordered by path. Returns the number of rows.
pub fn summarize(dir: &Path) -> Result<usize> {
    let mut reports = Vec::new();
    find_reports(dir, &mut reports)?;
    if reports.is_empty() {
        return Err(CliError::Scenario(format!("no report.json below {}", dir.display())));
    }
    let target = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&target).map_err(|e| CliError::Core {
        context: target.display().to_string(),
        source: e.into(),
    })?;
    let csv_err = |e: csv::Error| CliError::Core {
        context: "summary.csv".into(),
        source: e.into(),
    };
    let mut header = vec!["run"];
    header.extend(COLUMNS);
    header.push("overlap");
    w.write_record(&header).map_err(csv_err)?;
    for path in &reports {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let v: Value = serde_json::from_str(&text)?;
        let run = path
            .parent()
            .and_then(|p| p.strip_prefix(dir).ok())
            .map(|p| p.display().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| ".".into());
        let mut row = vec![run];
        for c in COLUMNS {
            row.push(v["report"][c].as_f64().map(|x| format!("{x}")).unwrap_or_default());
        }
        row.push(v["overlap"].as_f64().map(|x| format!("{x}")).unwrap_or_default());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&target))?;
    Ok(reports.len())
}
