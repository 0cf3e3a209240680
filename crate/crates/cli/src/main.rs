use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use oemsim_cli::pipeline::count;
use oemsim_cli::validate::validate_scenario;
use oemsim_cli::{load, report, resolve_out_dir, run_scenario, CliError};
use oemsim_core::Severity;

#[derive(Parser)]
#[command(name = "oemsim", version, about = "Electrically controlled quantum memory simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario and write its outputs and manifest.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory (OEMSIM_OUT takes precedence).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for sweeps (default: logical cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check a scenario without running simulations.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Rebuild summary.csv from the report.json files under a directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Run { scenario, out, workers } => {
            let loaded = load(&scenario)?;
            let env = std::env::var("OEMSIM_OUT").ok();
            let dir = resolve_out_dir(env.as_deref(), out.as_deref(), &loaded.scenario);
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(n) = workers {
                if n == 0 {
                    return Err(CliError::Scenario("--workers must be >= 1".into()));
                }
                pool = pool.num_threads(n);
            }
            let pool = pool.build().map_err(|e| CliError::Scenario(e.to_string()))?;
            let (manifest, _) = pool.install(|| run_scenario(&loaded, &dir))?;
            if !quiet {
                for f in &manifest.findings {
                    eprintln!("{f}");
                }
                println!(
                    "{}: {} files in {} ({:.2} s)",
                    manifest.scenario,
                    manifest.files.len(),
                    dir.display(),
                    manifest.wall_time_s
                );
            }
            Ok(0)
        }
        Command::Validate { scenario } => {
            let loaded = load(&scenario)?;
            let findings = validate_scenario(&loaded.scenario, &loaded.source)?;
            if !quiet {
                for f in &findings {
                    println!("{f}");
                }
                println!(
                    "{} blocking, {} advisory",
                    count(&findings, Severity::Blocking),
                    count(&findings, Severity::Advisory)
                );
            }
            Ok(if count(&findings, Severity::Blocking) > 0 { 1 } else { 0 })
        }
        Command::Report { out } => {
            let n = report::summarize(&out)?;
            if !quiet {
                println!("{n} runs summarized in {}", out.join("summary.csv").display());
            }
            Ok(0)
        }
    }
}
