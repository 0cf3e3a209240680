//! Linearized three-field model for weak probes.
//!
//! With nearly all atoms in |b⟩ the probe ε, polarization P and spin wave S
//! obey, in γ units on ξ ∈ [0, 1],
//!
//! ```text
//! ∂ξ ε = i√d P
//! ∂τ P = −(1 − iΔ_p) P + i√d ε + iΩ S
//! ∂τ S = iΩ* P
//! ```
//!
//! These couplings make the medium absorbing (Beer-Lambert ε ∝ e^(−dξ) at
//! Ω = 0) and give the balance
//! `∫|ε_in|² + E(0) = ∫|ε_out|² + E(T) + 2∫∫|P|²` with
//! `E = ∫(|P|² + |S|²) dξ`.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::finding::Finding;
use crate::grid::{energy, Field2, GridSpec, Scheme};
use crate::protocol::AdiabaticityMargins;

const I: C64 = C64::new(0.0, 1.0);
const ZERO: C64 = C64::new(0.0, 0.0);

/// Relative tolerance of the energy balance on the default grid.
pub const TOL_LEDGER: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedFields {
    pub eps: Field2,
    pub p: Field2,
    pub s: Field2,
}

/// Result of one reduced-model run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    pub grid: GridSpec,
    pub d: f64,
    pub delta_p: f64,
    /// ε(0, τ).
    pub input: Vec<C64>,
    /// ε(1, τ).
    pub output: Vec<C64>,
    pub p_initial: Vec<C64>,
    pub s_initial: Vec<C64>,
    pub p_final: Vec<C64>,
    pub s_final: Vec<C64>,
    /// 2∫∫|P|² dξ dτ over the run.
    pub decay: f64,
    /// ∫|ε(0,τ)|² dτ with step-midpoint values, the quadrature under which
    /// the implicit-midpoint step conserves energy exactly in τ.
    pub flux_in: f64,
    /// ∫|ε(1,τ)|² dτ with step-midpoint values.
    pub flux_out: f64,
    /// Full grids, when requested.
    pub fields: Option<ReducedFields>,
}

impl ReducedState {
    pub fn input_energy(&self) -> f64 {
        energy(&self.input, self.grid.dtau())
    }

    pub fn output_energy(&self) -> f64 {
        energy(&self.output, self.grid.dtau())
    }

    pub fn initial_stored(&self) -> f64 {
        let h = self.grid.dxi();
        energy(&self.p_initial, h) + energy(&self.s_initial, h)
    }

    pub fn final_stored(&self) -> f64 {
        let h = self.grid.dxi();
        energy(&self.p_final, h) + energy(&self.s_final, h)
    }

    /// ∫|S(ξ, T)|² dξ at the last time level.
    pub fn spin_energy(&self) -> f64 {
        energy(&self.s_final, self.grid.dxi())
    }
}

/// Optional initial coherences for a run (defaults to the empty medium).
#[derive(Debug, Clone, Copy, Default)]
pub struct Initial<'a> {
    pub p: Option<&'a [C64]>,
    pub s: Option<&'a [C64]>,
}

fn check_inputs(input: &[C64], control: &[C64], d: f64, delta_p: f64, grid: &GridSpec) -> Result<()> {
    grid.validate()?;
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::domain("optical_depth", format!("must be > 0, got {d}")));
    }
    if !delta_p.is_finite() {
        return Err(Error::domain("delta_p", "must be finite"));
    }
    if input.len() != grid.n_tau {
        return Err(Error::domain(
            "input",
            format!("{} samples for a grid with n_tau = {}", input.len(), grid.n_tau),
        ));
    }
    if control.len() != grid.n_tau {
        return Err(Error::domain(
            "control",
            format!("{} samples for a grid with n_tau = {}", control.len(), grid.n_tau),
        ));
    }
    if let Some(n) = input.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::domain("input", format!("non-finite sample {n}")));
    }
    if let Some(n) = control.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::domain("control", format!("non-finite sample {n}")));
    }
    Ok(())
}

/// ε along ξ from the boundary value and P by the trapezoid rule.
fn sweep_probe(e_in: C64, p: &[C64], sd: f64, h: f64, eps: &mut [C64]) {
    eps[0] = e_in;
    let c = I * (0.5 * h * sd);
    for j in 1..p.len() {
        eps[j] = eps[j - 1] + c * (p[j - 1] + p[j]);
    }
}

/// Integrates the reduced model from an empty medium and keeps the full grids.
pub fn integrate_reduced(
    input: &[C64],
    control: &[C64],
    d: f64,
    delta_p: f64,
    grid: &GridSpec,
) -> Result<ReducedState> {
    propagate_reduced(input, control, d, delta_p, grid, Initial::default(), true)
}

/// Integrates the reduced model from the given initial coherences.
/// `control` is Ω/γ on the τ grid.
pub fn propagate_reduced(
    input: &[C64],
    control: &[C64],
    d: f64,
    delta_p: f64,
    grid: &GridSpec,
    init: Initial<'_>,
    keep_fields: bool,
) -> Result<ReducedState> {
    check_inputs(input, control, d, delta_p, grid)?;
    let nx = grid.n_xi;
    let nt = grid.n_tau;
    let h = grid.dxi();
    let dt = grid.dtau();
    let sd = d.sqrt();

    let take = |v: Option<&[C64]>, name: &str| -> Result<Vec<C64>> {
        match v {
            None => Ok(vec![ZERO; nx]),
            Some(v) if v.len() == nx => Ok(v.to_vec()),
            Some(v) => Err(Error::domain(name, format!("{} samples for n_xi = {nx}", v.len()))),
        }
    };
    let mut p = take(init.p, "initial P")?;
    let mut s = take(init.s, "initial S")?;
    let p_initial = p.clone();
    let s_initial = s.clone();
    let mut eps = vec![ZERO; nx];
    sweep_probe(input[0], &p, sd, h, &mut eps);

    let mut fields = keep_fields.then(|| ReducedFields {
        eps: Field2::zeros(nt, nx),
        p: Field2::zeros(nt, nx),
        s: Field2::zeros(nt, nx),
    });
    let store = |f: &mut Option<ReducedFields>, n: usize, e: &[C64], p: &[C64], s: &[C64]| {
        if let Some(f) = f {
            f.eps.row_mut(n).copy_from_slice(e);
            f.p.row_mut(n).copy_from_slice(p);
            f.s.row_mut(n).copy_from_slice(s);
        }
    };
    store(&mut fields, 0, &eps, &p, &s);

    let mut output = Vec::with_capacity(nt);
    output.push(eps[nx - 1]);
    let mut decay = 0.0;
    let mut flux_in = 0.0;
    let mut flux_out = 0.0;
    let mut p_mid = vec![ZERO; nx];
    let a = C64::new(-1.0, delta_p);

    let mut p_new = vec![ZERO; nx];
    let mut s_new = vec![ZERO; nx];
    let mut e_new = vec![ZERO; nx];

    for n in 0..nt - 1 {
        match grid.scheme {
            Scheme::ImplicitMidpoint => {
                let k = 0.5 * dt;
                let wm = 0.5 * (control[n] + control[n + 1]);
                let ka = a * k;
                let ikw = I * k * wm;
                let ikwc = I * k * wm.conj();
                let iksd = I * (k * sd);
                let half = I * (0.5 * h * sd);
                for j in 0..nx {
                    let (e0, diag) = if j == 0 {
                        (input[n + 1], 1.0 - ka)
                    } else {
                        (e_new[j - 1] + half * p_new[j - 1], 1.0 - ka + 0.5 * k * d * h)
                    };
                    let rhs1 = p[j] * (1.0 + ka) + iksd * eps[j] + ikw * s[j] + iksd * e0;
                    let rhs2 = s[j] + ikwc * p[j];
                    let det = diag + k * k * wm.norm_sqr();
                    let pn = (rhs1 + ikw * rhs2) / det;
                    let sn = (diag * rhs2 + ikwc * rhs1) / det;
                    p_new[j] = pn;
                    s_new[j] = sn;
                    e_new[j] = if j == 0 { e0 } else { e0 + half * pn };
                }
            }
            Scheme::ExplicitPc => {
                let e_mid = 0.5 * (input[n] + input[n + 1]);
                let w_mid = 0.5 * (control[n] + control[n + 1]);
                let mut scratch = vec![ZERO; nx];
                let mut rhs = |pp: &[C64], ss: &[C64], e_in: C64, w: C64, dp: &mut [C64], ds: &mut [C64]| {
                    sweep_probe(e_in, pp, sd, h, &mut scratch);
                    for j in 0..nx {
                        dp[j] = a * pp[j] + I * sd * scratch[j] + I * w * ss[j];
                        ds[j] = I * w.conj() * pp[j];
                    }
                };
                let mut k1 = (vec![ZERO; nx], vec![ZERO; nx]);
                let mut k2 = k1.clone();
                let mut k3 = k1.clone();
                let mut k4 = k1.clone();
                let stage = |base: &[C64], k: &[C64], c: f64| -> Vec<C64> {
                    base.iter().zip(k).map(|(b, k)| b + k * c).collect()
                };
                rhs(&p, &s, input[n], control[n], &mut k1.0, &mut k1.1);
                let (p2, s2) = (stage(&p, &k1.0, 0.5 * dt), stage(&s, &k1.1, 0.5 * dt));
                rhs(&p2, &s2, e_mid, w_mid, &mut k2.0, &mut k2.1);
                let (p3, s3) = (stage(&p, &k2.0, 0.5 * dt), stage(&s, &k2.1, 0.5 * dt));
                rhs(&p3, &s3, e_mid, w_mid, &mut k3.0, &mut k3.1);
                let (p4, s4) = (stage(&p, &k3.0, dt), stage(&s, &k3.1, dt));
                rhs(&p4, &s4, input[n + 1], control[n + 1], &mut k4.0, &mut k4.1);
                for j in 0..nx {
                    p_new[j] = p[j] + (k1.0[j] + 2.0 * k2.0[j] + 2.0 * k3.0[j] + k4.0[j]) * (dt / 6.0);
                    s_new[j] = s[j] + (k1.1[j] + 2.0 * k2.1[j] + 2.0 * k3.1[j] + k4.1[j]) * (dt / 6.0);
                }
                sweep_probe(input[n + 1], &p_new, sd, h, &mut e_new);
            }
        }

        if let Some(j) = (0..nx).find(|&j| {
            let v = p_new[j] + s_new[j] + e_new[j];
            !(v.re.is_finite() && v.im.is_finite())
        }) {
            return Err(Error::Integration {
                xi: grid.xi(j),
                tau: grid.tau(n + 1),
                reason: "non-finite field value".into(),
            });
        }
        for j in 0..nx {
            p_mid[j] = 0.5 * (p[j] + p_new[j]);
        }
        decay += 2.0 * dt * energy(&p_mid, h);
        flux_in += dt * (0.5 * (input[n] + input[n + 1])).norm_sqr();
        flux_out += dt * (0.5 * (eps[nx - 1] + e_new[nx - 1])).norm_sqr();
        std::mem::swap(&mut p, &mut p_new);
        std::mem::swap(&mut s, &mut s_new);
        std::mem::swap(&mut eps, &mut e_new);

        output.push(eps[nx - 1]);
        store(&mut fields, n + 1, &eps, &p, &s);
    }

    Ok(ReducedState {
        grid: grid.clone(),
        d,
        delta_p,
        input: input.to_vec(),
        output,
        p_initial,
        s_initial,
        p_final: p,
        s_final: s,
        decay,
        flux_in,
        flux_out,
        fields,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StorageEfficiency {
    /// ∫|S(ξ,T)|² dξ divided by the input energy.
    pub eta_s: f64,
    pub input_energy: f64,
    /// False when the input energy differs from 1 by more than 1e-6.
    pub normalized: bool,
}

/// Storage efficiency at time level `n` (the last level when `None`).
/// Earlier levels need a run that kept its fields.
pub fn storage_efficiency(state: &ReducedState, n: Option<usize>) -> Result<StorageEfficiency> {
    let last = state.grid.n_tau - 1;
    let n = n.unwrap_or(last);
    let h = state.grid.dxi();
    let spin = if n == last {
        energy(&state.s_final, h)
    } else {
        let f = state.fields.as_ref().ok_or_else(|| {
            Error::domain("T", "fields were not kept; only the final level is available")
        })?;
        if n > last {
            return Err(Error::domain("T", format!("level {n} beyond grid end {last}")));
        }
        energy(f.s.row(n), h)
    };
    let e_in = state.input_energy();
    Ok(StorageEfficiency {
        eta_s: if e_in > 0.0 { spin / e_in } else { 0.0 },
        input_energy: e_in,
        normalized: (e_in - 1.0).abs() <= 1e-6,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub direction: Direction,
    pub state: ReducedState,
    /// ∫|ε(1,τ)|² over the grid, step-midpoint quadrature.
    pub emitted: f64,
    /// Exponential-tail estimate of the energy emitted after the grid end.
    pub tail: f64,
    /// (emitted + tail) / stored spin-wave energy.
    pub eta_r_conditional: f64,
    pub findings: Vec<Finding>,
}

impl Retrieval {
    pub fn output(&self) -> &[C64] {
        &self.state.output
    }
}

/// Energy left in the output after the last sample, from the decay rate of
/// |ε_out|² over the final tenth of the window.
pub fn tail_estimate(output: &[C64], dt: f64) -> f64 {
    let n = output.len();
    if n < 3 {
        return 0.0;
    }
    let m = (n / 10).max(1);
    let i_end = output[n - 1].norm_sqr();
    let i_start = output[n - 1 - m].norm_sqr();
    if i_end == 0.0 {
        return 0.0;
    }
    if i_start <= i_end {
        // not decaying: no finite extrapolation, report the level over the window
        return i_end * dt * (n - 1) as f64;
    }
    let rate = (i_start / i_end).ln() / (m as f64 * dt);
    i_end / rate
}

/// Re-emits a stored excitation with the retrieval control. Backward
/// retrieval flips the stored coherences ξ → 1 − ξ and propagates forward,
/// which is the same as emitting in the opposite direction.
pub fn retrieve(
    s_stored: &[C64],
    p_stored: Option<&[C64]>,
    control: &[C64],
    direction: Direction,
    d: f64,
    delta_p: f64,
    grid: &GridSpec,
    keep_fields: bool,
) -> Result<Retrieval> {
    let flip = |v: &[C64]| -> Vec<C64> {
        match direction {
            Direction::Forward => v.to_vec(),
            Direction::Backward => v.iter().rev().copied().collect(),
        }
    };
    let s0 = flip(s_stored);
    let p0 = p_stored.map(flip);
    let input = vec![ZERO; grid.n_tau];
    let state = propagate_reduced(
        &input,
        control,
        d,
        delta_p,
        grid,
        Initial {
            p: p0.as_deref(),
            s: Some(&s0),
        },
        keep_fields,
    )?;
    let dt = grid.dtau();
    let emitted = state.flux_out;
    let tail = tail_estimate(&state.output, dt);
    let stored = state.initial_stored();
    let retrieved = emitted + tail;
    let mut findings = Vec::new();
    if retrieved > 0.0 && tail > 0.01 * retrieved {
        findings.push(Finding::advisory(
            "retrieval-tail",
            format!(
                "extrapolated tail {tail:.3e} is {:.2}% of the retrieved energy; extend the retrieval window",
                100.0 * tail / retrieved
            ),
        ));
    }
    Ok(Retrieval {
        direction,
        emitted,
        tail,
        eta_r_conditional: if stored > 0.0 { retrieved / stored } else { 0.0 },
        state,
        findings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub input: f64,
    pub initial_stored: f64,
    pub output: f64,
    pub final_stored: f64,
    pub decay: f64,
    /// |in + initial − out − final − decay| / (in + initial).
    pub residual: f64,
}

/// Energy balance of a run. Fails when the residual exceeds 10·TOL_LEDGER.
pub fn energy_ledger(state: &ReducedState) -> Result<EnergyLedger> {
    let input = state.flux_in;
    let initial_stored = state.initial_stored();
    let output = state.flux_out;
    let final_stored = state.final_stored();
    let supplied = input + initial_stored;
    let imbalance = supplied - output - final_stored - state.decay;
    let residual = if supplied > 0.0 {
        imbalance.abs() / supplied
    } else {
        imbalance.abs()
    };
    if residual > 10.0 * TOL_LEDGER {
        return Err(Error::Accuracy(format!(
            "energy ledger residual {residual:.3e} exceeds {:.1e}; refine the grid",
            10.0 * TOL_LEDGER
        )));
    }
    Ok(EnergyLedger {
        input,
        initial_stored,
        output,
        final_stored,
        decay: state.decay,
        residual,
    })
}

/// Efficiencies and loss channels of one storage + retrieval cycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryReport {
    pub optical_depth: f64,
    pub direction: Direction,
    pub input_energy: f64,
    pub eta_s: f64,
    /// Retrieved energy as a fraction of the input energy.
    pub eta_r: f64,
    /// Retrieved energy as a fraction of the stored spin-wave energy.
    pub eta_r_conditional: f64,
    pub eta_total: f64,
    /// Input energy that left the medium during storage.
    pub leak: f64,
    /// Polarization decay during storage.
    pub decay_loss: f64,
    /// Polarization left over at T.
    pub residual_polarization: f64,
    pub retrieval_tail: f64,
    pub ledger_residual_storage: f64,
    pub ledger_residual_retrieval: f64,
    pub adiabaticity: Option<AdiabaticityMargins>,
}

impl MemoryReport {
    /// Flat `key = value` record, one field per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("optical_depth", format!("{}", self.optical_depth));
        kv("direction", format!("{:?}", self.direction).to_lowercase());
        kv("input_energy", format!("{}", self.input_energy));
        kv("eta_s", format!("{}", self.eta_s));
        kv("eta_r", format!("{}", self.eta_r));
        kv("eta_r_conditional", format!("{}", self.eta_r_conditional));
        kv("eta_total", format!("{}", self.eta_total));
        kv("leak", format!("{}", self.leak));
        kv("decay_loss", format!("{}", self.decay_loss));
        kv("residual_polarization", format!("{}", self.residual_polarization));
        kv("retrieval_tail", format!("{}", self.retrieval_tail));
        kv("ledger_residual_storage", format!("{}", self.ledger_residual_storage));
        kv("ledger_residual_retrieval", format!("{}", self.ledger_residual_retrieval));
        if let Some(m) = &self.adiabaticity {
            kv("adiabaticity_rate", format!("{}", m.rate));
            kv("adiabaticity_amplitude", format!("{}", m.amplitude));
            kv("adiabaticity_duration", format!("{}", m.duration));
        }
        out
    }
}

/// Combines a storage run and its retrieval into a report. Both ledgers
/// must close within 10·TOL_LEDGER.
pub fn memory_report(storage: &ReducedState, retrieval: &Retrieval) -> Result<MemoryReport> {
    let ls = energy_ledger(storage)?;
    let lr = energy_ledger(&retrieval.state)?;
    let e_in = storage.input_energy();
    let frac = |x: f64| if e_in > 0.0 { x / e_in } else { 0.0 };
    let eta_s = frac(storage.spin_energy());
    let eta_r = frac(retrieval.emitted + retrieval.tail);
    let h = storage.grid.dxi();
    Ok(MemoryReport {
        optical_depth: storage.d,
        direction: retrieval.direction,
        input_energy: e_in,
        eta_s,
        eta_r,
        eta_r_conditional: retrieval.eta_r_conditional,
        eta_total: eta_r,
        leak: frac(ls.output),
        decay_loss: frac(ls.decay),
        residual_polarization: frac(energy(&storage.p_final, h)),
        retrieval_tail: frac(retrieval.tail),
        ledger_residual_storage: ls.residual,
        ledger_residual_retrieval: lr.residual,
        adiabaticity: None,
    })
}
