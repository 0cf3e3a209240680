//! Static checks of a scenario; nothing is simulated beyond steady states.

use oemsim_core::oem_steady::solve_mirror;
use oemsim_core::params::validate_regime;
use oemsim_core::{derive, Finding};

use crate::error::Result;
use crate::scenario::{expand_sweep, RunKind, Scenario};

/// Largest photon number during the hold, relative to the uncharged cavity,
/// below which the control counts as switched off.
pub const CLOSURE_LIMIT: f64 = 0.1;

/// All findings for a parsed scenario. Only parse-level problems are
/// errors; everything else is reported.
pub fn validate_scenario(sc: &Scenario, source: &str) -> Result<Vec<Finding>> {
    if sc.run_kind == RunKind::Sweep {
        let mut out = Vec::new();
        for (label, variant) in expand_sweep(source, sc)? {
            for f in check(&variant) {
                out.push(Finding::new(f.severity, f.code, format!("{label}: {}", f.message)));
            }
        }
        return Ok(out);
    }
    Ok(check(sc))
}

fn check(sc: &Scenario) -> Vec<Finding> {
    let mut out = Vec::new();
    let params = match sc.physical() {
        Ok(p) => p,
        Err(e) => return vec![Finding::blocking("scenario", e.to_string())],
    };
    let blocking = params.check();
    if !blocking.is_empty() {
        return blocking;
    }
    let dp = match derive(&params) {
        Ok(dp) => dp,
        Err(e) => return vec![Finding::blocking("params", e.to_string())],
    };
    if sc.grid.n_xi < 2 || sc.grid.n_tau < 3 {
        out.push(Finding::blocking("grid", "need n_xi >= 2 and n_tau >= 3"));
    }
    let o = &sc.optimize;
    if o.max_iter < 1 || !(o.tol_iter.is_finite() && o.tol_iter > 0.0) {
        out.push(Finding::blocking("optimize", "need max_iter >= 1 and tol_iter > 0"));
    }
    if let Some(ds) = &o.depths {
        if ds.is_empty() || ds.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            out.push(Finding::blocking("optimize.depths", "depths must be a non-empty list of values > 0"));
        }
    }
    if !(sc.probe.amplitude.is_finite() && sc.probe.amplitude > 0.0) {
        out.push(Finding::blocking("probe.amplitude", "must be > 0"));
    }
    if let Some(steady) = &sc.steady {
        if let Err(e) = steady.charges() {
            out.push(Finding::blocking("steady", e.to_string()));
        }
    }
    if sc.probe.full_model && (dp.delta_p_tilde - dp.delta_tilde).abs() > 1e-12 {
        out.push(Finding::advisory(
            "two-photon-detuning",
            "probe and control detunings differ; the reduced model assumes two-photon resonance",
        ));
    }

    let Some(section) = &sc.schedule else {
        return out;
    };
    let schedule = match section.resolve(&params, &dp, sc.grid.n_tau) {
        Ok(s) => s,
        Err(e) => {
            out.push(Finding::blocking("schedule", e.to_string()));
            return out;
        }
    };
    let sched_findings = schedule.check();
    let broken = sched_findings.iter().any(Finding::is_blocking);
    out.extend(sched_findings);
    if broken {
        return out;
    }
    let peak = schedule.storage_pulse.total_charge();
    out.extend(validate_regime(&params, &dp, peak).iter().map(|r| r.to_finding()));
    match (solve_mirror(0.0, &dp, &params, None), solve_mirror(peak, &dp, &params, None)) {
        (Ok(open), Ok(closed)) if open.n > 0.0 => {
            let ratio = closed.n / open.n;
            if ratio > CLOSURE_LIMIT {
                out.push(Finding::advisory(
                    "cavity-not-closed",
                    format!(
                        "hold |Omega|^2 is {:.1}% of its initial value (limit {:.0}%); raise the stored charge",
                        100.0 * ratio,
                        100.0 * CLOSURE_LIMIT
                    ),
                ));
            }
        }
        (Err(e), _) | (_, Err(e)) => out.push(Finding::blocking("steady-state", e.to_string())),
        _ => {}
    }
    out
}
