//! Executes scenarios and writes their outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use oemsim_core::grid::{energy, inner, GridSpec};
use oemsim_core::io::{write_control_csv, write_fields_binary, write_fields_csv, write_series_csv};
use oemsim_core::mbloch_full::{integrate_full, linearize_check, FullConfig, LinearizationDeviation};
use oemsim_core::mbloch_reduced::{integrate_reduced, memory_report, retrieve, MemoryReport};
use oemsim_core::oem_steady::{cavity_amplitude, solve_mirror, transient_oem, OemState, TransientOptions};
use oemsim_core::optimize::{efficiency_vs_depth, optimize_input, seed_input, DepthPoint, OptimizationRun};
use oemsim_core::protocol::{adiabaticity_margins, build_protocol, integrate_current, AdiabaticityMargins, ProtocolTrace};
use oemsim_core::{Finding, Severity};

use crate::error::{io_err, CliError, Context, Result};
use crate::scenario::{expand_sweep, setup, ProbeShape, RunKind, Scenario, Setup};
use crate::validate::validate_scenario;

/// Files written by a run, relative to its output directory, in write order.
#[derive(Debug)]
pub struct Outputs {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn sub(&self, name: &str) -> Result<Outputs> {
        Outputs::new(&self.dir.join(name))
    }

    fn adopt(&mut self, prefix: &str, child: Outputs) {
        self.files.extend(child.files.into_iter().map(|f| Path::new(prefix).join(f)));
    }

    /// Creates `name`, hands a writer to `f`, and records the file.
    pub fn write<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(io_err(&path))?;
        self.files.push(PathBuf::from(name));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n").map_err(io_err(name))
        })
    }

    fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        self.write(name, |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(header).map_err(csv_err(name))?;
            for r in rows {
                c.write_record(r).map_err(csv_err(name))?;
            }
            c.flush().map_err(io_err(name))
        })
    }
}

fn csv_err(name: &str) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Core {
        context: format!("writing {name}"),
        source: e.into(),
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Clone, Serialize)]
pub struct FullSummary {
    /// Probe scale μ of the full run.
    pub amplitude: f64,
    pub max_trace_drift: f64,
    pub max_population_excursion: f64,
    pub deviation: LinearizationDeviation,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizationSummary {
    pub iterations: usize,
    pub converged: bool,
    pub eta_total: Vec<f64>,
    pub eta_s: Vec<f64>,
}

impl From<&OptimizationRun> for OptimizationSummary {
    fn from(run: &OptimizationRun) -> Self {
        Self {
            iterations: run.iterations.len(),
            converged: run.converged,
            eta_total: run.etas(),
            eta_s: run.iterations.iter().map(|it| it.eta_s).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProtocolOutcome {
    pub report: MemoryReport,
    /// |⟨x(T − τ), y(τ)⟩|² / (‖x‖²‖y‖²) between the input and the output in
    /// the retrieval window.
    pub overlap: f64,
    /// n(t)/n(0) at the storage-window end.
    pub photon_fraction_hold: f64,
    /// Fraction of the emitted energy that leaves during the hold, before
    /// the retrieval window opens.
    pub hold_emission: f64,
    pub optimization: Option<OptimizationSummary>,
    pub full: Option<FullSummary>,
    pub findings: Vec<Finding>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SteadyRow {
    pub n_q: f64,
    pub q: f64,
    pub n_photon: f64,
    pub omega_tilde: f64,
    pub branches: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransientOutcome {
    pub max_rel_q_deviation: f64,
    pub max_rel_n_deviation: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DepthTable {
    pub points: Vec<DepthPoint>,
    /// Slope of log(1 − η) against log d over 10 ≤ d ≤ 100, when at least
    /// two depths fall in that range.
    pub large_depth_exponent: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Steady { rows: Vec<SteadyRow> },
    Transient(TransientOutcome),
    Protocol(Box<ProtocolOutcome>),
    Optimize { optimization: OptimizationSummary },
    Depths(DepthTable),
    Sweep { axis: String, runs: Vec<(String, ProtocolOutcome)> },
}

/// Runs a scenario into `out`. Validation findings are prepended; blocking
/// ones abort the run.
pub fn execute(sc: &Scenario, source: &str, out: &mut Outputs) -> Result<(Outcome, Vec<Finding>)> {
    let mut findings = validate_scenario(sc, source)?;
    if let Some(f) = findings.iter().find(|f| f.is_blocking()) {
        return Err(CliError::Scenario(f.to_string()));
    }
    let outcome = match sc.run_kind {
        RunKind::Steady => run_steady(sc, out)?,
        RunKind::Transient => run_transient(sc, out, &mut findings)?,
        RunKind::Protocol => {
            let p = run_protocol(sc, out)?;
            findings.extend(p.findings.iter().cloned());
            Outcome::Protocol(Box::new(p))
        }
        RunKind::Optimize => run_optimize(sc, out)?,
        RunKind::Sweep => run_sweep(sc, source, out, &mut findings)?,
    };
    Ok((outcome, findings))
}

fn run_steady(sc: &Scenario, out: &mut Outputs) -> Result<Outcome> {
    let Setup { params, derived } = setup(sc)?;
    let charges = sc.steady.as_ref().expect("checked").charges()?;
    let mut rows = Vec::with_capacity(charges.len());
    let mut seed = None;
    for &nq in &charges {
        let pt = solve_mirror(nq, &derived, &params, seed).ctx("steady state")?;
        seed = Some(pt.q);
        rows.push(SteadyRow {
            n_q: nq,
            q: pt.q,
            n_photon: pt.n,
            omega_tilde: pt.omega.norm() / params.gamma,
            branches: pt.branches,
            residual: pt.residual,
        });
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.n_q),
                num(r.q),
                num(r.n_photon),
                num(r.omega_tilde),
                r.branches.to_string(),
                num(r.residual),
            ]
        })
        .collect();
    out.table(
        "steady.csv",
        &["n_q", "q_m", "n_photon", "omega_tilde_abs", "branches", "residual_n"],
        &table,
    )?;
    Ok(Outcome::Steady { rows })
}

fn run_transient(sc: &Scenario, out: &mut Outputs, findings: &mut Vec<Finding>) -> Result<Outcome> {
    let Setup { params, derived } = setup(sc)?;
    let schedule = sc.schedule.as_ref().expect("checked").resolve(&params, &derived, sc.grid.n_tau)?;
    let grid = schedule.time_grid(sc.grid.n_tau).ctx("protocol grid")?;
    let ramp = integrate_current(&[schedule.storage_pulse, schedule.retrieval_pulse], &grid.times).ctx("charge ramp")?;
    let start = solve_mirror(0.0, &derived, &params, None).ctx("initial steady state")?;
    let init = OemState {
        q: start.q,
        p: 0.0,
        a: cavity_amplitude(start.q, &derived, &params),
    };
    let tr = transient_oem(&ramp, &derived, &params, init, &TransientOptions::default()).ctx("transient")?;
    if tr.max_rel_n_deviation > 0.01 {
        findings.push(Finding::advisory(
            "adiabatic-elimination",
            format!(
                "transient photon number deviates from the quasi-static value by {:.2}% of its maximum",
                100.0 * tr.max_rel_n_deviation
            ),
        ));
    }
    let rows: Vec<Vec<String>> = (0..tr.times.len())
        .map(|i| {
            vec![
                num(tr.times[i]),
                num(tr.n_q[i]),
                num(tr.q[i]),
                num(tr.q_static[i]),
                num(tr.a[i].norm_sqr()),
                num(tr.n_static[i]),
            ]
        })
        .collect();
    out.table("transient.csv", &["t_s", "n_q", "q_m", "q_static_m", "n_photon", "n_static"], &rows)?;
    let outcome = TransientOutcome {
        max_rel_q_deviation: tr.max_rel_q_deviation,
        max_rel_n_deviation: tr.max_rel_n_deviation,
        samples: tr.times.len(),
    };
    out.json("summary.json", &outcome)?;
    Ok(Outcome::Transient(outcome))
}

/// The reduced-model control conj(Ω)/γ on each trace sample.
fn reduced_control(omega: &[C64], gamma: f64) -> Vec<C64> {
    omega.iter().map(|z| z.conj() / gamma).collect()
}

pub struct ProtocolSetup {
    pub setup: Setup,
    pub trace: ProtocolTrace,
    pub grid: GridSpec,
    pub storage_control: Vec<C64>,
    pub d: f64,
    pub delta_p: f64,
}

pub fn protocol_setup(sc: &Scenario) -> Result<ProtocolSetup> {
    let s = setup(sc)?;
    let schedule = sc.schedule.as_ref().expect("checked").resolve(&s.params, &s.derived, sc.grid.n_tau)?;
    let trace = build_protocol(&schedule, &s.derived, &s.params, sc.grid.n_tau).ctx("protocol")?;
    let gamma = s.params.gamma;
    let grid = GridSpec::new(sc.grid.n_xi, sc.grid.n_tau, schedule.t_storage * gamma).with_scheme(sc.grid.scheme);
    let storage_control = reduced_control(&trace.storage_control().omega, gamma);
    Ok(ProtocolSetup {
        d: s.derived.optical_depth,
        delta_p: s.derived.delta_p_tilde,
        setup: s,
        trace,
        grid,
        storage_control,
    })
}

pub fn run_protocol(sc: &Scenario, out: &mut Outputs) -> Result<ProtocolOutcome> {
    let ps = protocol_setup(sc)?;
    let ProtocolSetup {
        setup: Setup { params, derived },
        trace,
        grid,
        storage_control,
        d,
        delta_p,
    } = &ps;
    let gamma = params.gamma;
    let mut findings = trace.findings.clone();
    out.write("control.csv", |w| write_control_csv(w, &trace.control, gamma).ctx("control.csv"))?;

    let margins: AdiabaticityMargins =
        adiabaticity_margins(&trace.storage_control(), *d, *delta_p, gamma).ctx("adiabaticity")?;
    if margins.rate >= 0.1 || margins.amplitude >= 0.1 {
        findings.push(Finding::advisory(
            "adiabaticity",
            format!("margins rate = {:.3e}, amplitude = {:.3e} are not << 1", margins.rate, margins.amplitude),
        ));
    }

    let (input, optimization) = match sc.probe.shape {
        ProbeShape::Gaussian => (seed_input(grid), None),
        ProbeShape::Optimized => {
            let run = optimize_input(*d, storage_control, *delta_p, grid, &sc.optimize.options()).ctx("optimize")?;
            if !run.converged {
                findings.push(Finding::advisory(
                    "optimizer-not-converged",
                    format!("stopped after {} iterations", run.iterations.len()),
                ));
            }
            write_iterations(out, &run)?;
            (run.optimal_input().to_vec(), Some(OptimizationSummary::from(&run)))
        }
    };
    let taus = grid.taus();
    out.write("input.csv", |w| write_series_csv(w, &taus, &input).ctx("input.csv"))?;

    let storage = integrate_reduced(&input, storage_control, *d, *delta_p, grid).ctx("storage")?;
    let release = reduced_control(&trace.release_control().omega, gamma);
    let rgrid = GridSpec::new(grid.n_xi, release.len(), (release.len() - 1) as f64 * grid.dtau()).with_scheme(grid.scheme);
    let retrieval = retrieve(
        &storage.s_final,
        Some(&storage.p_final),
        &release,
        sc.probe.retrieval,
        *d,
        *delta_p,
        &rgrid,
        false,
    )
    .ctx("retrieval")?;
    findings.extend(retrieval.findings.iter().cloned());
    let mut report = memory_report(&storage, &retrieval).ctx("memory report")?;
    report.adiabaticity = Some(margins);

    let out_taus: Vec<f64> = rgrid.taus().iter().map(|t| t + grid.tau_max).collect();
    out.write("output.csv", |w| write_series_csv(w, &out_taus, retrieval.output()).ctx("output.csv"))?;

    let fields = storage.fields.as_ref().expect("integrate_reduced keeps fields");
    let named = [("eps", &fields.eps), ("p", &fields.p), ("s", &fields.s)];
    out.write("storage_fields.bin", |w| write_fields_binary(w, grid, &named).ctx("storage_fields.bin"))?;
    if sc.output.field_csv {
        out.write("storage_fields.csv", |w| write_fields_csv(w, grid, &named).ctx("storage_fields.csv"))?;
    }
    let xis: Vec<f64> = (0..grid.n_xi).map(|j| grid.xi(j)).collect();
    out.write("spin_wave.csv", |w| write_series_csv(w, &xis, &storage.s_final).ctx("spin_wave.csv"))?;

    // retrieval window only: the hold precedes it
    let dt = grid.dtau();
    let offset = trace.grid.retrieve_start - trace.grid.store_end;
    let emitted = &retrieval.output()[offset..offset + grid.n_tau];
    let total_out = energy(retrieval.output(), dt);
    let hold_emission = if total_out > 0.0 {
        energy(&retrieval.output()[..=offset], dt) / total_out
    } else {
        0.0
    };
    let reversed: Vec<C64> = input.iter().rev().copied().collect();
    let norm = energy(&reversed, dt) * energy(emitted, dt);
    let overlap = if norm > 0.0 {
        inner(&reversed, emitted, dt).norm_sqr() / norm
    } else {
        0.0
    };

    let full = if sc.probe.full_model {
        let peak = input.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mu = sc.probe.amplitude / peak;
        let probe: Vec<C64> = input.iter().map(|z| z.conj() * mu).collect();
        let w = trace.storage_control().omega_tilde(gamma);
        let cfg = FullConfig {
            d: *d,
            delta_p: *delta_p,
            delta: derived.delta_tilde,
        };
        let run = integrate_full(&probe, &w, &cfg, grid, None).ctx("full model")?;
        let deviation = linearize_check(&run, &storage, mu).ctx("linearization check")?;
        let out_full: Vec<C64> = run.output();
        out.write("full_output.csv", |w| write_series_csv(w, &taus, &out_full).ctx("full_output.csv"))?;
        Some(FullSummary {
            amplitude: sc.probe.amplitude,
            max_trace_drift: run.max_trace_drift,
            max_population_excursion: run.max_population_excursion,
            deviation,
        })
    } else {
        None
    };

    let n0 = trace.control.n_photon[0];
    let photon_fraction_hold = if n0 > 0.0 {
        trace.control.n_photon[trace.grid.store_end] / n0
    } else {
        0.0
    };
    let outcome = ProtocolOutcome {
        report,
        overlap,
        photon_fraction_hold,
        hold_emission,
        optimization,
        full,
        findings,
    };
    out.write("report.txt", |w| w.write_all(outcome.report.to_text().as_bytes()).map_err(io_err("report.txt")))?;
    out.json("report.json", &outcome)?;
    Ok(outcome)
}

fn write_iterations(out: &mut Outputs, run: &OptimizationRun) -> Result<()> {
    let rows: Vec<Vec<String>> = run
        .iterations
        .iter()
        .enumerate()
        .map(|(k, it)| vec![k.to_string(), num(it.eta_s), num(it.eta_total), num(it.envelope_change)])
        .collect();
    out.table("iterations.csv", &["iteration", "eta_s", "eta_total", "envelope_change"], &rows)
}

fn run_optimize(sc: &Scenario, out: &mut Outputs) -> Result<Outcome> {
    let ps = protocol_setup(sc)?;
    out.write("control.csv", |w| write_control_csv(w, &ps.trace.control, ps.setup.params.gamma).ctx("control.csv"))?;
    let opts = sc.optimize.options();
    if let Some(depths) = &sc.optimize.depths {
        let points = efficiency_vs_depth(depths, &ps.storage_control, ps.delta_p, &ps.grid, &opts).ctx("efficiency sweep")?;
        let rows: Vec<Vec<String>> = points
            .iter()
            .map(|p| {
                vec![
                    num(p.optical_depth),
                    num(p.eta_total),
                    num(p.eta_s),
                    p.iterations.to_string(),
                    p.converged.to_string(),
                ]
            })
            .collect();
        out.table("depth_efficiency.csv", &["optical_depth", "eta_total", "eta_s", "iterations", "converged"], &rows)?;
        let table = DepthTable {
            large_depth_exponent: large_depth_exponent(&points),
            points,
        };
        out.json("summary.json", &table)?;
        return Ok(Outcome::Depths(table));
    }
    let run = optimize_input(ps.d, &ps.storage_control, ps.delta_p, &ps.grid, &opts).ctx("optimize")?;
    write_iterations(out, &run)?;
    let taus = ps.grid.taus();
    out.write("optimal_input.csv", |w| write_series_csv(w, &taus, run.optimal_input()).ctx("optimal_input.csv"))?;
    let summary = OptimizationSummary::from(&run);
    out.json("summary.json", &summary)?;
    Ok(Outcome::Optimize { optimization: summary })
}

/// Least-squares slope of log(1 − η) against log d for 10 ≤ d ≤ 100.
pub fn large_depth_exponent(points: &[DepthPoint]) -> Option<f64> {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| (10.0..=100.0).contains(&p.optical_depth) && p.eta_total < 1.0)
        .map(|p| (p.optical_depth.ln(), (1.0 - p.eta_total).ln()))
        .collect();
    if xy.len() < 2 {
        return None;
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn run_sweep(sc: &Scenario, source: &str, out: &mut Outputs, findings: &mut Vec<Finding>) -> Result<Outcome> {
    let variants = expand_sweep(source, sc)?;
    let axis = sc.sweep.as_ref().expect("checked").axis.clone();
    let mut subs = Vec::with_capacity(variants.len());
    for (label, _) in &variants {
        subs.push(out.sub(label)?);
    }
    let results: Vec<Result<(ProtocolOutcome, Outputs)>> = variants
        .par_iter()
        .zip(subs.into_par_iter())
        .map(|((_, variant), mut sub)| run_protocol(variant, &mut sub).map(|o| (o, sub)))
        .collect();
    let mut runs = Vec::with_capacity(variants.len());
    for ((label, _), res) in variants.iter().zip(results) {
        let (outcome, sub) = res?;
        out.adopt(label, sub);
        findings.extend(outcome.findings.iter().map(|f| Finding::new(f.severity, f.code.clone(), format!("{label}: {}", f.message))));
        runs.push((label.clone(), outcome));
    }
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|(label, o)| {
            let r = &o.report;
            vec![
                label.split_once('=').map_or(label.as_str(), |x| x.1).to_string(),
                num(r.optical_depth),
                num(r.eta_s),
                num(r.eta_r),
                num(r.eta_total),
                num(r.leak),
                num(r.decay_loss),
                num(o.overlap),
                num(r.ledger_residual_storage),
                num(r.ledger_residual_retrieval),
                o.full.as_ref().map_or(String::new(), |f| num(f.deviation.max())),
            ]
        })
        .collect();
    out.table(
        "sweep.csv",
        &[
            &axis,
            "optical_depth",
            "eta_s",
            "eta_r",
            "eta_total",
            "leak",
            "decay_loss",
            "overlap",
            "ledger_residual_storage",
            "ledger_residual_retrieval",
            "linearization_deviation",
        ],
        &rows,
    )?;
    Ok(Outcome::Sweep { axis, runs })
}

/// Severity counts for log lines.
pub fn count(findings: &[Finding], severity: Severity) -> usize {
    findings.iter().filter(|f| f.severity == severity).count()
}
