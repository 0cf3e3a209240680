//! Full three-level Maxwell-Bloch integrator.
//!
//! Atoms have ground states |b⟩, |c⟩ and excited state |a⟩. The probe
//! α̃ = A couples b↔a, the cavity control Ω̃ = W couples c↔a, both in units
//! of γ. With time in 1/γ and ξ ∈ [0, 1]:
//!
//! ```text
//! ∂τσ_aa = −2σ_aa − 2 Im(A σ_ab) − 2 Im(W σ_ca*)
//! ∂τσ_bb =  σ_aa + 2 Im(A σ_ab)
//! ∂τσ_cc =  σ_aa + 2 Im(W σ_ca*)
//! ∂τσ_ab = −(1 − iΔ_p)σ_ab + iA*(σ_aa − σ_bb) − iW*σ_cb
//! ∂τσ_cb =  i(Δ_p − δ)σ_cb + iA*σ_ca − iWσ_ab
//! ∂τσ_ca = −(1 + iδ)σ_ca + iAσ_cb − iW(σ_aa − σ_cc)
//! ∂ξA    =  i d σ_ab*
//! ```
//!
//! For given fields the Bloch equations are linear in the nine real
//! components, and the rows of the population equations sum to zero, so the
//! implicit-midpoint step conserves the trace to round-off.
//!
//! For a weak probe of scale μ with all atoms in |b⟩ the fields
//! ε = A*/μ, P = −√d σ_ab/μ, S = √d σ_cb/μ obey the reduced model with
//! control W*.

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field2, GridSpec, Scheme};
use crate::mbloch_reduced::ReducedState;

type Vec9 = SVector<f64, 9>;
type Mat9 = SMatrix<f64, 9, 9>;

const I: C64 = C64::new(0.0, 1.0);
const ZERO: C64 = C64::new(0.0, 0.0);

/// Tolerated population excursion outside [0, 1].
pub const POPULATION_SLACK: f64 = 1e-6;
/// Trace drift beyond which a run is rejected.
pub const TRACE_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomState {
    pub aa: f64,
    pub bb: f64,
    pub cc: f64,
    pub ab: C64,
    pub cb: C64,
    pub ca: C64,
}

impl Default for AtomState {
    fn default() -> Self {
        Self::ground()
    }
}

impl AtomState {
    /// All atoms in |b⟩.
    pub fn ground() -> Self {
        Self {
            aa: 0.0,
            bb: 1.0,
            cc: 0.0,
            ab: ZERO,
            cb: ZERO,
            ca: ZERO,
        }
    }

    pub fn trace(&self) -> f64 {
        self.aa + self.bb + self.cc
    }

    fn to_vec(self) -> Vec9 {
        Vec9::from([
            self.aa, self.bb, self.cc, self.ab.re, self.ab.im, self.cb.re, self.cb.im, self.ca.re, self.ca.im,
        ])
    }

    fn from_vec(v: &Vec9) -> Self {
        Self {
            aa: v[0],
            bb: v[1],
            cc: v[2],
            ab: C64::new(v[3], v[4]),
            cb: C64::new(v[5], v[6]),
            ca: C64::new(v[7], v[8]),
        }
    }

    fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|x| x.is_finite())
    }

    /// Largest distance of a population outside [0, 1].
    fn population_excursion(&self) -> f64 {
        [self.aa, self.bb, self.cc]
            .iter()
            .map(|&p| (-p).max(p - 1.0).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Bloch right-hand side for probe `a` and control `w`.
pub fn bloch_rhs(s: &AtomState, a: C64, w: C64, delta_p: f64, delta: f64) -> AtomState {
    let probe = 2.0 * (a * s.ab).im;
    let ctrl = 2.0 * (w * s.ca.conj()).im;
    AtomState {
        aa: -2.0 * s.aa - probe - ctrl,
        bb: s.aa + probe,
        cc: s.aa + ctrl,
        ab: -C64::new(1.0, -delta_p) * s.ab + I * a.conj() * (s.aa - s.bb) - I * w.conj() * s.cb,
        cb: I * (delta_p - delta) * s.cb + I * a.conj() * s.ca - I * w * s.ab,
        ca: -C64::new(1.0, delta) * s.ca + I * a * s.cb - I * w * (s.aa - s.cc),
    }
}

/// The Bloch generator as a real 9×9 matrix.
fn generator(a: C64, w: C64, delta_p: f64, delta: f64) -> Mat9 {
    let mut m = Mat9::zeros();
    for k in 0..9 {
        let mut e = Vec9::zeros();
        e[k] = 1.0;
        let col = bloch_rhs(&AtomState::from_vec(&e), a, w, delta_p, delta).to_vec();
        m.set_column(k, &col);
    }
    m
}

fn midpoint_step(s: &AtomState, a_mid: C64, w_mid: C64, delta_p: f64, delta: f64, dt: f64) -> Result<AtomState> {
    let m = generator(a_mid, w_mid, delta_p, delta) * (0.5 * dt);
    let lhs = Mat9::identity() - m;
    let rhs = (Mat9::identity() + m) * s.to_vec();
    lhs.lu()
        .solve(&rhs)
        .map(|v| AtomState::from_vec(&v))
        .ok_or_else(|| Error::Accuracy("singular implicit-midpoint system; reduce dtau".into()))
}

/// Atom history and probe of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct FullRun {
    pub grid: GridSpec,
    pub d: f64,
    /// A(ξ, τ).
    pub probe: Field2,
    /// Row-major (τ slow, ξ fast) atomic states.
    pub atoms: Vec<AtomState>,
    /// max |σ_aa + σ_bb + σ_cc − 1| over the run.
    pub max_trace_drift: f64,
    /// Largest population excursion outside [0, 1].
    pub max_population_excursion: f64,
    /// Largest coherence magnitude.
    pub max_coherence: f64,
}

impl FullRun {
    pub fn atom(&self, n: usize, j: usize) -> &AtomState {
        &self.atoms[n * self.grid.n_xi + j]
    }

    /// A(1, τ).
    pub fn output(&self) -> Vec<C64> {
        self.probe.column(self.grid.n_xi - 1)
    }

    /// One coherence as a complex grid.
    pub fn coherence(&self, pick: fn(&AtomState) -> C64) -> Field2 {
        Field2 {
            n_tau: self.grid.n_tau,
            n_xi: self.grid.n_xi,
            data: self.atoms.iter().map(pick).collect(),
        }
    }

    pub fn population(&self, pick: fn(&AtomState) -> f64) -> Vec<f64> {
        self.atoms.iter().map(pick).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullConfig {
    pub d: f64,
    pub delta_p: f64,
    pub delta: f64,
}

/// Integrates probe and atoms. `input` is A(0, τ), `control` is the
/// physical Ω/γ on the τ grid, `init` the atomic state at every ξ
/// (ground state when `None`).
pub fn integrate_full(
    input: &[C64],
    control: &[C64],
    cfg: &FullConfig,
    grid: &GridSpec,
    init: Option<&[AtomState]>,
) -> Result<FullRun> {
    grid.validate()?;
    let FullConfig { d, delta_p, delta } = *cfg;
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::domain("optical_depth", format!("must be > 0, got {d}")));
    }
    if !(delta_p.is_finite() && delta.is_finite()) {
        return Err(Error::domain("detuning", "must be finite"));
    }
    let nx = grid.n_xi;
    let nt = grid.n_tau;
    if input.len() != nt || control.len() != nt {
        return Err(Error::domain(
            "input",
            format!("input/control lengths {}/{} for n_tau = {nt}", input.len(), control.len()),
        ));
    }
    let mut atoms = match init {
        None => vec![AtomState::ground(); nx],
        Some(v) if v.len() == nx => v.to_vec(),
        Some(v) => return Err(Error::domain("init", format!("{} states for n_xi = {nx}", v.len()))),
    };
    if let Some(j) = atoms.iter().position(|s| (s.trace() - 1.0).abs() > 1e-12) {
        return Err(Error::domain("init", format!("trace of initial state at node {j} is not 1")));
    }
    let h = grid.dxi();
    let dt = grid.dtau();
    let half = I * (0.5 * h * d);

    let sweep = |a0: C64, st: &[AtomState], out: &mut [C64]| {
        out[0] = a0;
        for j in 1..st.len() {
            out[j] = out[j - 1] + half * (st[j - 1].ab.conj() + st[j].ab.conj());
        }
    };

    let mut probe = Field2::zeros(nt, nx);
    let mut a_cur = vec![ZERO; nx];
    sweep(input[0], &atoms, &mut a_cur);
    probe.row_mut(0).copy_from_slice(&a_cur);
    let mut history = Vec::with_capacity(nt * nx);
    history.extend_from_slice(&atoms);

    let mut a_new = vec![ZERO; nx];
    let mut next = atoms.clone();
    let mut max_trace_drift: f64 = atoms.iter().map(|s| (s.trace() - 1.0).abs()).fold(0.0, f64::max);
    let mut max_excursion: f64 = atoms.iter().map(AtomState::population_excursion).fold(0.0, f64::max);
    let mut max_coherence: f64 = 0.0;

    for n in 0..nt - 1 {
        let wm = 0.5 * (control[n] + control[n + 1]);
        match grid.scheme {
            Scheme::ImplicitMidpoint => {
                for j in 0..nx {
                    if j == 0 {
                        a_new[0] = input[n + 1];
                        next[0] = midpoint_step(&atoms[0], 0.5 * (a_cur[0] + a_new[0]), wm, delta_p, delta, dt)?;
                        continue;
                    }
                    let base = a_new[j - 1] + half * next[j - 1].ab.conj();
                    let mut guess = atoms[j];
                    let mut a_j = base + half * guess.ab.conj();
                    let mut converged = false;
                    for _ in 0..50 {
                        guess = midpoint_step(&atoms[j], 0.5 * (a_cur[j] + a_j), wm, delta_p, delta, dt)?;
                        let a_next = base + half * guess.ab.conj();
                        let change = (a_next - a_j).norm();
                        a_j = a_next;
                        if change <= 1e-15 + 1e-13 * a_j.norm() {
                            converged = true;
                            break;
                        }
                    }
                    if !converged {
                        return Err(Error::Accuracy(format!(
                            "probe/atom coupling did not converge at xi={}, tau={}; reduce dxi",
                            grid.xi(j),
                            grid.tau(n + 1)
                        )));
                    }
                    // final state consistent with the converged probe
                    next[j] = midpoint_step(&atoms[j], 0.5 * (a_cur[j] + a_j), wm, delta_p, delta, dt)?;
                    a_new[j] = base + half * next[j].ab.conj();
                }
            }
            Scheme::ExplicitPc => {
                let w0 = control[n];
                let w1 = control[n + 1];
                let e_mid = 0.5 * (input[n] + input[n + 1]);
                let mut field = vec![ZERO; nx];
                let mut deriv = |st: &[AtomState], a0: C64, w: C64| -> Vec<AtomState> {
                    sweep(a0, st, &mut field);
                    st.iter()
                        .zip(&field)
                        .map(|(s, a)| bloch_rhs(s, *a, w, delta_p, delta))
                        .collect()
                };
                let add = |base: &[AtomState], k: &[AtomState], c: f64| -> Vec<AtomState> {
                    base.iter()
                        .zip(k)
                        .map(|(b, k)| AtomState::from_vec(&(b.to_vec() + k.to_vec() * c)))
                        .collect()
                };
                let k1 = deriv(&atoms, input[n], w0);
                let k2 = deriv(&add(&atoms, &k1, 0.5 * dt), e_mid, wm);
                let k3 = deriv(&add(&atoms, &k2, 0.5 * dt), e_mid, wm);
                let k4 = deriv(&add(&atoms, &k3, dt), input[n + 1], w1);
                for j in 0..nx {
                    let v = atoms[j].to_vec()
                        + (k1[j].to_vec() + k2[j].to_vec() * 2.0 + k3[j].to_vec() * 2.0 + k4[j].to_vec()) * (dt / 6.0);
                    next[j] = AtomState::from_vec(&v);
                }
                sweep(input[n + 1], &next, &mut a_new);
            }
        }

        for (j, s) in next.iter().enumerate() {
            if !s.is_finite() || !(a_new[j].re.is_finite() && a_new[j].im.is_finite()) {
                return Err(Error::Integration {
                    xi: grid.xi(j),
                    tau: grid.tau(n + 1),
                    reason: "non-finite atomic state or probe".into(),
                });
            }
            let drift = (s.trace() - 1.0).abs();
            if drift > TRACE_LIMIT {
                return Err(Error::Accuracy(format!(
                    "trace drift {drift:.3e} at xi={}, tau={}; refine the grid",
                    grid.xi(j),
                    grid.tau(n + 1)
                )));
            }
            let exc = s.population_excursion();
            if exc > POPULATION_SLACK {
                return Err(Error::Accuracy(format!(
                    "population outside [0, 1] by {exc:.3e} at xi={}, tau={}; refine the grid",
                    grid.xi(j),
                    grid.tau(n + 1)
                )));
            }
            max_trace_drift = max_trace_drift.max(drift);
            max_excursion = max_excursion.max(exc);
            max_coherence = max_coherence.max(s.ab.norm()).max(s.cb.norm()).max(s.ca.norm());
        }
        std::mem::swap(&mut atoms, &mut next);
        std::mem::swap(&mut a_cur, &mut a_new);
        probe.row_mut(n + 1).copy_from_slice(&a_cur);
        history.extend_from_slice(&atoms);
    }

    Ok(FullRun {
        grid: grid.clone(),
        d,
        probe,
        atoms: history,
        max_trace_drift,
        max_population_excursion: max_excursion,
        max_coherence,
    })
}

/// Largest deviation between a full run and the reduced model, each
/// relative to the peak of the reduced field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearizationDeviation {
    pub probe: f64,
    pub polarization: f64,
    pub spin_wave: f64,
}

impl LinearizationDeviation {
    pub fn max(&self) -> f64 {
        self.probe.max(self.polarization).max(self.spin_wave)
    }
}

/// Compares a full run driven with probe scale `mu` against a reduced run
/// with the same envelope, using ε = A*/μ, P = −√d σ_ab/μ, S = √d σ_cb/μ.
pub fn linearize_check(full: &FullRun, reduced: &ReducedState, mu: f64) -> Result<LinearizationDeviation> {
    let fields = reduced
        .fields
        .as_ref()
        .ok_or_else(|| Error::domain("reduced", "run did not keep its fields"))?;
    if full.grid.n_xi != reduced.grid.n_xi
        || full.grid.n_tau != reduced.grid.n_tau
        || (full.grid.tau_max - reduced.grid.tau_max).abs() > 1e-12 * reduced.grid.tau_max
    {
        return Err(Error::domain("grid", "full and reduced grids differ"));
    }
    if (full.d - reduced.d).abs() > 1e-12 * reduced.d {
        return Err(Error::domain("optical_depth", "full and reduced runs differ in d"));
    }
    if mu == 0.0 {
        let quiet = full.atoms.iter().all(|s| s.ab == ZERO && s.cb == ZERO) && full.probe.max_abs() == 0.0;
        let dev = if quiet && fields.eps.max_abs() == 0.0 { 0.0 } else { f64::INFINITY };
        return Ok(LinearizationDeviation {
            probe: dev,
            polarization: dev,
            spin_wave: dev,
        });
    }
    let sd = full.d.sqrt();
    let rel = |full_vals: &mut dyn Iterator<Item = C64>, red: &Field2| -> f64 {
        let scale = red.max_abs();
        let worst = full_vals
            .zip(&red.data)
            .map(|(f, r)| (f - r).norm())
            .fold(0.0, f64::max);
        if scale > 0.0 {
            worst / scale
        } else {
            worst
        }
    };
    let probe = rel(&mut full.probe.data.iter().map(|a| a.conj() / mu), &fields.eps);
    let polarization = rel(&mut full.atoms.iter().map(|s| -s.ab * sd / mu), &fields.p);
    let spin_wave = rel(&mut full.atoms.iter().map(|s| s.cb * sd / mu), &fields.s);
    Ok(LinearizationDeviation {
        probe,
        polarization,
        spin_wave,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mbloch_reduced::integrate_reduced;

    fn cfg(d: f64, delta_p: f64, delta: f64) -> FullConfig {
        FullConfig { d, delta_p, delta }
    }

    #[test]
    fn rhs_rows_sum_to_zero() {
        let s = AtomState {
            aa: 0.2,
            bb: 0.5,
            cc: 0.3,
            ab: C64::new(0.1, -0.2),
            cb: C64::new(0.05, 0.3),
            ca: C64::new(-0.1, 0.1),
        };
        let r = bloch_rhs(&s, C64::new(0.3, 0.4), C64::new(-0.7, 0.2), 0.3, -0.2);
        assert!((r.aa + r.bb + r.cc).abs() < 1e-15);
    }

    #[test]
    fn dark_ground_state_is_stationary() {
        let g = GridSpec::new(8, 50, 10.0);
        let run = integrate_full(&vec![ZERO; 50], &vec![ZERO; 50], &cfg(5.0, 0.1, 0.1), &g, None).unwrap();
        assert!(run.atoms.iter().all(|s| *s == AtomState::ground()));
        assert_eq!(run.probe.max_abs(), 0.0);
        assert_eq!(run.max_trace_drift, 0.0);
    }

    #[test]
    fn optical_pumping_matches_exponential_oracle() {
        let nt = 2001;
        let g = GridSpec::new(4, nt, 20.0);
        let w = C64::new(0.7, 0.0);
        let init = AtomState {
            aa: 0.0,
            bb: 0.9,
            cc: 0.1,
            ..AtomState::ground()
        };
        let run = integrate_full(&vec![ZERO; nt], &vec![w; nt], &cfg(2.0, 0.0, 0.0), &g, Some(&vec![init; 4])).unwrap();
        // at ξ = 0 the probe is the (zero) input: linear ODE with constant generator
        let m = generator(ZERO, w, 0.0, 0.0);
        let mut prev_cc = f64::INFINITY;
        for n in (0..nt).step_by(100) {
            let exact = AtomState::from_vec(&((m * g.tau(n)).exp() * init.to_vec()));
            let s = run.atom(n, 0);
            assert!((s.cc - exact.cc).abs() < 1e-5, "tau {}: {} vs {}", g.tau(n), s.cc, exact.cc);
            assert!((s.bb - exact.bb).abs() < 1e-5);
            if g.tau(n) > 2.0 {
                assert!(s.cc <= prev_cc + 1e-12);
            }
            prev_cc = s.cc;
        }
        assert!(run.atom(nt - 1, 0).cc < 1e-3);
        assert!(run.max_trace_drift < 1e-12);
    }

    #[test]
    fn weak_cw_probe_is_absorbed() {
        let g = GridSpec::default();
        let mu = 1e-4;
        let input = vec![C64::new(mu, 0.0); g.n_tau];
        let run = integrate_full(&input, &vec![ZERO; g.n_tau], &cfg(1.0, 0.0, 0.0), &g, None).unwrap();
        let t = run.output().last().unwrap().norm_sqr() / (mu * mu);
        assert!((t - (-2.0f64).exp()).abs() < 1e-5, "{t}");
    }

    #[test]
    fn weak_probe_matches_reduced_model() {
        let g = GridSpec::new(64, 128, 30.0);
        let shape: Vec<C64> = g
            .taus()
            .iter()
            .map(|t| C64::new((-0.5 * ((t - 10.0) / 3.0).powi(2)).exp(), 0.0))
            .collect();
        let w: Vec<C64> = g
            .taus()
            .iter()
            .map(|t| C64::from_polar(0.8 * 0.5 * (1.0 - ((t - 16.0) / 2.0).tanh()), 0.4))
            .collect();
        let red_ctl: Vec<C64> = w.iter().map(|z| z.conj()).collect();
        let reduced = integrate_reduced(&shape, &red_ctl, 5.0, 0.1, &g).unwrap();
        let mut devs = Vec::new();
        for mu in [1e-2, 5e-3] {
            let input: Vec<C64> = shape.iter().map(|z| z.conj() * mu).collect();
            let full = integrate_full(&input, &w, &cfg(5.0, 0.1, 0.1), &g, None).unwrap();
            devs.push(linearize_check(&full, &reduced, mu).unwrap().max());
        }
        assert!(devs[0] < 1e-2);
        let ratio = devs[0] / devs[1];
        assert!((ratio - 4.0).abs() < 0.4, "amplitude halving ratio {ratio}");
    }

    #[test]
    fn zero_probe_zero_deviation() {
        let g = GridSpec::new(16, 16, 5.0);
        let w = vec![C64::new(0.5, 0.0); 16];
        let reduced = integrate_reduced(&vec![ZERO; 16], &w, 2.0, 0.0, &g).unwrap();
        let full = integrate_full(&vec![ZERO; 16], &w, &cfg(2.0, 0.0, 0.0), &g, None).unwrap();
        assert_eq!(linearize_check(&full, &reduced, 0.0).unwrap().max(), 0.0);
        let other = GridSpec::new(16, 17, 5.0);
        let r2 = integrate_reduced(&vec![ZERO; 17], &vec![ZERO; 17], 2.0, 0.0, &other).unwrap();
        assert!(linearize_check(&full, &r2, 0.0).is_err());
    }

    #[test]
    fn second_order_grid_convergence() {
        let run = |g: &GridSpec| {
            let input: Vec<C64> = g
                .taus()
                .iter()
                .map(|t| C64::new(0.05 * (-0.5 * ((t - 6.0) / 1.5).powi(2)).exp(), 0.0))
                .collect();
            let w: Vec<C64> = g
                .taus()
                .iter()
                .map(|t| C64::new(0.5 * (1.0 - ((t - 8.0) / 1.5).tanh()), 0.0))
                .collect();
            integrate_full(&input, &w, &cfg(3.0, 0.1, 0.1), g, None).unwrap()
        };
        let base = GridSpec::new(17, 33, 16.0);
        let coarse = run(&base);
        let fine = run(&base.refined(2));
        let reference = run(&base.refined(8));
        let err = |r: &FullRun, k: usize| {
            let mut worst: f64 = 0.0;
            for n in 0..base.n_tau {
                for j in 0..base.n_xi {
                    let ref_val = reference.probe.at(8 * n, 8 * j);
                    worst = worst.max((r.probe.at(k * n, k * j) - ref_val).norm());
                }
            }
            worst
        };
        let ratio = err(&coarse, 1) / err(&fine, 2);
        assert!(ratio >= 3.5, "convergence ratio {ratio}");
    }

    #[test]
    fn rejects_bad_initial_trace() {
        let g = GridSpec::new(4, 4, 1.0);
        let bad = AtomState {
            bb: 0.5,
            ..AtomState::ground()
        };
        assert!(integrate_full(&[ZERO; 4], &[ZERO; 4], &cfg(1.0, 0.0, 0.0), &g, Some(&vec![bad; 4])).is_err());
    }
}
