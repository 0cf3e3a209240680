//! Charge-pulse schedules, the resulting control waveform, and the
//! adiabaticity margins of a storage run.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finding::Finding;
use crate::oem_steady::{ramp_to_control, ChargeRamp, ControlTrace, Phase};
use crate::params::{DerivedParams, PhysicalParams};

/// Gaussian current pulse I(t) = amplitude·exp(−(t − center)²/(2·width²)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurrentPulse {
    /// Peak charging rate [charges/s], signed.
    pub amplitude: f64,
    /// [s]
    pub center: f64,
    /// Standard deviation [s].
    pub width: f64,
}

impl CurrentPulse {
    pub fn current(&self, t: f64) -> f64 {
        let u = (t - self.center) / self.width;
        self.amplitude * (-0.5 * u * u).exp()
    }

    fn current_slope(&self, t: f64) -> f64 {
        let u = (t - self.center) / self.width;
        -self.amplitude * u / self.width * (-0.5 * u * u).exp()
    }

    /// Total transferred charge amplitude·width·√(2π).
    pub fn total_charge(&self) -> f64 {
        self.amplitude * self.width * (2.0 * PI).sqrt()
    }

    /// Amplitude whose total transferred charge is `n_q`.
    pub fn amplitude_for_charge(n_q: f64, width: f64) -> f64 {
        n_q / (width * (2.0 * PI).sqrt())
    }
}

/// n_q(t) = max(0, ∫ ΣI dt′) on `times`, starting from zero charge at the
/// first sample. Each interval uses the endpoint-corrected trapezoid
/// h/2·(f_a + f_b) − h²/12·(f′_b − f′_a), which is fourth order for smooth
/// currents. Samples clamped by more than 1e-9 of the peak are counted.
pub fn integrate_current(pulses: &[CurrentPulse], times: &[f64]) -> Result<ChargeRamp> {
    if times.is_empty() {
        return Err(Error::domain("times", "empty time grid"));
    }
    if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::domain("times", format!("not strictly increasing at sample {}", i + 1)));
    }
    if let Some(p) = pulses.iter().find(|p| !(p.width > 0.0 && p.width.is_finite())) {
        return Err(Error::domain("pulse.width", format!("must be > 0, got {}", p.width)));
    }
    let f = |t: f64| pulses.iter().map(|p| p.current(t)).sum::<f64>();
    let df = |t: f64| pulses.iter().map(|p| p.current_slope(t)).sum::<f64>();

    let mut raw = Vec::with_capacity(times.len());
    raw.push(0.0);
    let mut acc = 0.0;
    for w in times.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = b - a;
        acc += 0.5 * h * (f(a) + f(b)) - h * h / 12.0 * (df(b) - df(a));
        raw.push(acc);
    }
    let peak = raw.iter().copied().fold(0.0, f64::max);
    let clamped_samples = raw.iter().filter(|&&v| v < -1e-9 * peak).count();
    let n_q = raw.into_iter().map(|v| v.max(0.0)).collect();
    let mut ramp = ChargeRamp::new(times.to_vec(), n_q)?;
    ramp.clamped_samples = clamped_samples;
    Ok(ramp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSchedule {
    pub storage_pulse: CurrentPulse,
    pub retrieval_pulse: CurrentPulse,
    /// Time between the end of storage and the start of the retrieval window [s].
    pub hold: f64,
    /// End of the storage window T [s]; the storage window starts at t = 0.
    pub t_storage: f64,
}

/// Sample layout of a protocol: storage window, hold, retrieval window of
/// the same length as the storage window, on one uniform step.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolGrid {
    pub times: Vec<f64>,
    pub dt: f64,
    /// Samples per window (storage and retrieval).
    pub n_window: usize,
    /// Index of t = T.
    pub store_end: usize,
    /// Index where the retrieval window starts.
    pub retrieve_start: usize,
    /// Hold rounded to a whole number of steps [s].
    pub hold: f64,
}

impl ProtocolGrid {
    pub fn phase(&self, i: usize) -> Phase {
        if i <= self.store_end {
            Phase::Store
        } else if i < self.retrieve_start {
            Phase::Hold
        } else {
            Phase::Retrieve
        }
    }
}

impl ProtocolSchedule {
    /// Schedule whose retrieval pulse is the time mirror of the storage
    /// pulse about the middle of the hold, with opposite current direction.
    pub fn mirrored(storage_pulse: CurrentPulse, t_storage: f64, hold: f64) -> Self {
        Self {
            storage_pulse,
            retrieval_pulse: CurrentPulse {
                amplitude: -storage_pulse.amplitude,
                center: 2.0 * t_storage + hold - storage_pulse.center,
                width: storage_pulse.width,
            },
            hold,
            t_storage,
        }
    }

    /// Invariant violations as findings. Sign or width errors are blocking;
    /// incomplete neutralization is advisory.
    pub fn check(&self) -> Vec<Finding> {
        let mut out = Vec::new();
        for (name, p) in [("storage_pulse", &self.storage_pulse), ("retrieval_pulse", &self.retrieval_pulse)] {
            if !(p.width.is_finite() && p.width > 0.0) {
                out.push(Finding::blocking(
                    "schedule-width",
                    format!("`{name}.width` must be > 0, got {}", p.width),
                ));
            }
            if !(p.amplitude.is_finite() && p.center.is_finite()) {
                out.push(Finding::blocking(
                    "schedule-range",
                    format!("`{name}` amplitude and center must be finite"),
                ));
            }
        }
        if self.storage_pulse.amplitude < 0.0 {
            out.push(Finding::blocking(
                "schedule-sign",
                "`storage_pulse.amplitude` must be >= 0 (charging)",
            ));
        }
        if self.retrieval_pulse.amplitude > 0.0 {
            out.push(Finding::blocking(
                "schedule-sign",
                "`retrieval_pulse.amplitude` must be <= 0 (discharging)",
            ));
        }
        if !(self.t_storage.is_finite() && self.t_storage > 0.0) {
            out.push(Finding::blocking(
                "schedule-range",
                format!("`t_storage` must be > 0, got {}", self.t_storage),
            ));
        }
        if !(self.hold.is_finite() && self.hold >= 0.0) {
            out.push(Finding::blocking(
                "schedule-range",
                format!("`hold` must be >= 0, got {}", self.hold),
            ));
        }
        let stored = self.storage_pulse.total_charge();
        let net = stored + self.retrieval_pulse.total_charge();
        if stored > 0.0 && net.abs() > 1e-3 * stored {
            out.push(Finding::advisory(
                "schedule-neutralization",
                format!("net charge after both pulses is {net:.4e} ({:.3}% of the stored charge)", 100.0 * net / stored),
            ));
        }
        out
    }

    pub fn time_grid(&self, n_window: usize) -> Result<ProtocolGrid> {
        if n_window < 2 {
            return Err(Error::domain("grid.n_tau", format!("need >= 2 samples per window, got {n_window}")));
        }
        if !(self.t_storage.is_finite() && self.t_storage > 0.0) {
            return Err(Error::domain("t_storage", format!("must be > 0, got {}", self.t_storage)));
        }
        if !(self.hold.is_finite() && self.hold >= 0.0) {
            return Err(Error::domain("hold", format!("must be >= 0, got {}", self.hold)));
        }
        let dt = self.t_storage / (n_window - 1) as f64;
        let n_hold = (self.hold / dt).round() as usize;
        let store_end = n_window - 1;
        let retrieve_start = store_end + n_hold;
        let total = retrieve_start + n_window;
        Ok(ProtocolGrid {
            times: (0..total).map(|i| i as f64 * dt).collect(),
            dt,
            n_window,
            store_end,
            retrieve_start,
            hold: n_hold as f64 * dt,
        })
    }
}

/// Control waveform of a full protocol run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolTrace {
    pub grid: ProtocolGrid,
    pub control: ControlTrace,
    pub findings: Vec<Finding>,
}

impl ProtocolTrace {
    pub fn storage_control(&self) -> ControlTrace {
        self.control.slice(0..self.grid.store_end + 1)
    }

    /// Hold plus retrieval window, starting at t = T.
    pub fn release_control(&self) -> ControlTrace {
        self.control.slice(self.grid.store_end..self.control.len())
    }
}

/// Integrates the schedule's currents on the protocol grid and follows the
/// mirror steady state along the resulting charge ramp.
pub fn build_protocol(
    schedule: &ProtocolSchedule,
    dp: &DerivedParams,
    params: &PhysicalParams,
    n_window: usize,
) -> Result<ProtocolTrace> {
    if let Some(f) = schedule.check().into_iter().find(Finding::is_blocking) {
        return Err(Error::domain("schedule", f.message));
    }
    let grid = schedule.time_grid(n_window)?;
    let ramp = integrate_current(&[schedule.storage_pulse, schedule.retrieval_pulse], &grid.times)?;
    let mut control = ramp_to_control(&ramp, dp, params)?;
    control.phase = Some((0..grid.times.len()).map(|i| grid.phase(i)).collect());

    let mut findings = schedule.check();
    if ramp.clamped_samples > 0 {
        findings.push(Finding::advisory(
            "charge-clamped",
            format!("{} samples of negative charge clamped to zero", ramp.clamped_samples),
        ));
    }
    if let Some(&first) = control.bistable_samples.first() {
        findings.push(Finding::advisory(
            "bistability",
            format!(
                "multiple steady states at {} samples (first at t = {:.4e} s); branch chosen by continuation",
                control.bistable_samples.len(),
                control.times[first]
            ),
        ));
    }
    Ok(ProtocolTrace {
        grid,
        control,
        findings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdiabaticityMargins {
    /// max |ȧ/a| / |γd + iΔ_p|.
    pub rate: f64,
    /// max |Ω| / |γd + iΔ_p|.
    pub amplitude: f64,
    /// T·d·γ with T the trace duration.
    pub duration: f64,
}

/// Margins of the adiabatic regime along a control trace. Samples where
/// |a| < 1e-6·max|a| are skipped in the rate margin.
pub fn adiabaticity_margins(
    control: &ControlTrace,
    d: f64,
    delta_p_tilde: f64,
    gamma: f64,
) -> Result<AdiabaticityMargins> {
    let n = control.len();
    if n < 3 {
        return Err(Error::domain("control", format!("need >= 3 samples, got {n}")));
    }
    let scale = gamma * C64::new(d, delta_p_tilde).norm();
    let a = &control.a;
    let t = &control.times;
    let a_max = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let floor = 1e-6 * a_max;
    let mut rate: f64 = 0.0;
    for i in 1..n - 1 {
        if a[i].norm() < floor || a_max == 0.0 {
            continue;
        }
        let da = (a[i + 1] - a[i - 1]) / (t[i + 1] - t[i - 1]);
        rate = rate.max((da / a[i]).norm());
    }
    let amplitude = control.omega.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(AdiabaticityMargins {
        rate: rate / scale,
        amplitude: amplitude / scale,
        duration: (t[n - 1] - t[0]) * d * gamma,
    })
}
