//! Mirror position and cavity field of the opto-electro-mechanical cavity.
//!
//! With the mirror and cavity adiabatically eliminated, the force balance
//!
//! ```text
//! k·q − ħ·G0·n(q) = n_q·η,      n(q) = |ε_c|² / (κ² + (Δ − G0·q)²)
//! ```
//!
//! is a cubic in q. It is solved in the scaled variable x = G0·q/κ, where it
//! reads `(x − c)(1 + (D − x)²) = β` with c = n_q·η·G0/(kκ), D = Δ/κ and
//! β = ħ·G0²·ε_c²/(kκ³). Since the left factor `1 + (D − x)²` is at least 1,
//! every real root lies in `[c, c + β]`, which gives a guaranteed bracket.

use num_complex::Complex64 as C64;

use crate::constants::HBAR;
use crate::error::{Error, Result};
use crate::params::{DerivedParams, PhysicalParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyOptions {
    /// Relative force tolerance, multiplies n_q·η.
    pub tol_force_rel: f64,
    /// Absolute force tolerance [N].
    pub tol_force_abs: f64,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            tol_force_rel: 1e-9,
            tol_force_abs: 1e-18,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyPoint {
    pub n_q: f64,
    /// Mirror displacement [m].
    pub q: f64,
    /// Intracavity photon number.
    pub n: f64,
    /// Cavity amplitude [√photon].
    pub a: C64,
    /// Control Rabi frequency g·a [rad/s].
    pub omega: C64,
    /// Number of real roots of the balance at this charge.
    pub branches: usize,
    /// |k·q − ħG0·n − n_q·η| [N].
    pub residual: f64,
}

/// Steady cavity amplitude ε_c / (κ + i(Δ − G0·q)).
pub fn cavity_amplitude(q: f64, dp: &DerivedParams, params: &PhysicalParams) -> C64 {
    C64::new(dp.eps_c, 0.0) / C64::new(params.kappa, params.drive_detuning - dp.g0 * q)
}

/// Force balance k·q − ħG0·n(q) − n_q·η [N].
pub fn force_residual(q: f64, n_q: f64, dp: &DerivedParams, params: &PhysicalParams) -> f64 {
    let n = cavity_amplitude(q, dp, params).norm_sqr();
    dp.k_spring * q - HBAR * dp.g0 * n - n_q * dp.eta_coul
}

/// Linear-law displacement n_q·η/(mω_m²), valid when ħG0·n ≪ n_q·η.
pub fn approx_mirror(n_q: f64, dp: &DerivedParams) -> f64 {
    n_q * dp.eta_coul / dp.k_spring
}

struct Scaled {
    c: f64,
    beta: f64,
    d: f64,
}

impl Scaled {
    fn new(n_q: f64, dp: &DerivedParams, params: &PhysicalParams) -> Self {
        let kappa = params.kappa;
        let stiffness = dp.k_spring * kappa / dp.g0;
        Self {
            c: n_q * dp.eta_coul / stiffness,
            beta: HBAR * dp.g0 * (dp.eps_c / kappa).powi(2) / stiffness,
            d: params.drive_detuning / kappa,
        }
    }

    fn eval(&self, x: f64) -> (f64, f64) {
        let u = self.d - x;
        let lor = 1.0 + u * u;
        let g = (x - self.c) * lor - self.beta;
        let dg = lor - 2.0 * (x - self.c) * u;
        (g, dg)
    }

    /// Stationary points of the cubic, if real.
    fn critical_points(&self) -> Vec<f64> {
        let disc = (self.d - self.c).powi(2) - 3.0;
        if disc < 0.0 {
            return Vec::new();
        }
        let s = disc.sqrt();
        let mid = 2.0 * self.d + self.c;
        vec![(mid - s) / 3.0, (mid + s) / 3.0]
    }

    fn roots(&self) -> Vec<f64> {
        let (lo, hi) = (self.c, self.c + self.beta);
        if self.beta == 0.0 {
            return vec![lo];
        }
        let mut cuts = vec![lo];
        cuts.extend(self.critical_points().into_iter().filter(|&x| x > lo && x < hi));
        cuts.push(hi);

        let mut roots: Vec<f64> = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (ga, _) = self.eval(a);
            let (gb, _) = self.eval(b);
            let r = if ga == 0.0 {
                Some(a)
            } else if gb == 0.0 {
                Some(b)
            } else if ga.signum() != gb.signum() {
                Some(bracketed_newton(|x| self.eval(x), a, b))
            } else {
                None
            };
            if let Some(r) = r {
                let dup = roots
                    .last()
                    .is_some_and(|&p| (p - r).abs() <= 4.0 * f64::EPSILON * r.abs().max(1.0));
                if !dup {
                    roots.push(r);
                }
            }
        }
        roots
    }
}

/// Bisection on a sign-changing bracket, accelerated by Newton steps that are
/// accepted only when they stay strictly inside the current bracket.
pub(crate) fn bracketed_newton<F>(f: F, lo: f64, hi: f64) -> f64
where
    F: Fn(f64) -> (f64, f64),
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, _) = f(a);
    let mut x = 0.5 * (a + b);
    for _ in 0..300 {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx != 0.0 && newton > a.min(b) && newton < a.max(b) {
            newton
        } else {
            0.5 * (a + b)
        };
        let scale = x.abs().max(f64::MIN_POSITIVE);
        if (next - x).abs() <= 2.0 * f64::EPSILON * scale
            || (b - a).abs() <= 2.0 * f64::EPSILON * scale
        {
            return next;
        }
        x = next;
    }
    x
}

/// All real roots of the steady-state balance at charge `n_q`, ascending [m].
pub fn mirror_roots(n_q: f64, dp: &DerivedParams, params: &PhysicalParams) -> Vec<f64> {
    if dp.eps_c == 0.0 {
        return vec![approx_mirror(n_q, dp)];
    }
    let scale = params.kappa / dp.g0;
    Scaled::new(n_q, dp, params)
        .roots()
        .into_iter()
        .map(|x| x * scale)
        .collect()
}

pub fn solve_mirror(
    n_q: f64,
    dp: &DerivedParams,
    params: &PhysicalParams,
    seed: Option<f64>,
) -> Result<SteadyPoint> {
    solve_mirror_with(n_q, dp, params, seed, &SteadyOptions::default())
}

/// Steady point at charge `n_q`. With a seed the root nearest to it is
/// returned (continuation); otherwise the root of smallest |q|.
pub fn solve_mirror_with(
    n_q: f64,
    dp: &DerivedParams,
    params: &PhysicalParams,
    seed: Option<f64>,
    opts: &SteadyOptions,
) -> Result<SteadyPoint> {
    if !(n_q.is_finite() && n_q >= 0.0) {
        return Err(Error::domain("n_q", format!("charge number must be >= 0, got {n_q}")));
    }
    let r = params.charge_distance;
    let roots: Vec<f64> = mirror_roots(n_q, dp, params)
        .into_iter()
        .filter(|q| q.is_finite() && q.abs() <= r)
        .collect();
    let pick = match seed {
        Some(s) => roots
            .iter()
            .copied()
            .min_by(|a, b| (a - s).abs().total_cmp(&(b - s).abs())),
        None => roots.iter().copied().min_by(|a, b| a.abs().total_cmp(&b.abs())),
    };
    let q = pick.ok_or_else(|| Error::Solver {
        sample: None,
        reason: format!("no real root within [-r, r] = [-{r:e}, {r:e}] m at n_q = {n_q}"),
    })?;
    let a = cavity_amplitude(q, dp, params);
    let residual = force_residual(q, n_q, dp, params).abs();
    let tol = opts.tol_force_rel * n_q * dp.eta_coul + opts.tol_force_abs;
    if residual > tol {
        return Err(Error::Solver {
            sample: None,
            reason: format!("force residual {residual:e} N exceeds tolerance {tol:e} N at n_q = {n_q}"),
        });
    }
    Ok(SteadyPoint {
        n_q,
        q,
        n: a.norm_sqr(),
        a,
        omega: a * params.g,
        branches: roots.len(),
        residual,
    })
}

/// Charge number on the object sampled in time.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeRamp {
    /// Sample times [s], strictly increasing.
    pub times: Vec<f64>,
    /// Charge number at each sample, ≥ 0.
    pub n_q: Vec<f64>,
    /// Samples where a negative integrated charge was clamped to zero.
    pub clamped_samples: usize,
}

impl ChargeRamp {
    pub fn new(times: Vec<f64>, n_q: Vec<f64>) -> Result<Self> {
        if times.len() != n_q.len() {
            return Err(Error::domain("ramp", "times and n_q differ in length"));
        }
        if times.is_empty() {
            return Err(Error::domain("ramp", "empty ramp"));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::domain("ramp.times", format!("not strictly increasing at sample {}", i + 1)));
        }
        if let Some(i) = n_q.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain("ramp.n_q", format!("negative or non-finite charge at sample {i}")));
        }
        Ok(Self {
            times,
            n_q,
            clamped_samples: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Linear interpolation in time, constant outside the sample span.
    pub fn charge_at(&self, t: f64) -> f64 {
        let ts = &self.times;
        if t <= ts[0] {
            return self.n_q[0];
        }
        let last = ts.len() - 1;
        if t >= ts[last] {
            return self.n_q[last];
        }
        let k = ts.partition_point(|&s| s <= t) - 1;
        let w = (t - ts[k]) / (ts[k + 1] - ts[k]);
        self.n_q[k] * (1.0 - w) + self.n_q[k + 1] * w
    }

    pub fn peak(&self) -> f64 {
        self.n_q.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Store,
    Hold,
    Retrieve,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Store => "store",
            Phase::Hold => "hold",
            Phase::Retrieve => "retrieve",
        }
    }
}

/// Control field sampled along a charge ramp.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrace {
    pub times: Vec<f64>,
    pub n_q: Vec<f64>,
    pub q: Vec<f64>,
    pub n_photon: Vec<f64>,
    pub a: Vec<C64>,
    /// Control Rabi frequency g·a [rad/s].
    pub omega: Vec<C64>,
    pub phase: Option<Vec<Phase>>,
    /// Samples at which the balance had more than one real root.
    pub bistable_samples: Vec<usize>,
}

impl ControlTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Ω/γ at every sample.
    pub fn omega_tilde(&self, gamma: f64) -> Vec<C64> {
        self.omega.iter().map(|w| w / gamma).collect()
    }

    /// Sub-trace over the sample index range.
    pub fn slice(&self, range: std::ops::Range<usize>) -> ControlTrace {
        ControlTrace {
            times: self.times[range.clone()].to_vec(),
            n_q: self.n_q[range.clone()].to_vec(),
            q: self.q[range.clone()].to_vec(),
            n_photon: self.n_photon[range.clone()].to_vec(),
            a: self.a[range.clone()].to_vec(),
            omega: self.omega[range.clone()].to_vec(),
            phase: self.phase.as_ref().map(|p| p[range.clone()].to_vec()),
            bistable_samples: self
                .bistable_samples
                .iter()
                .filter(|i| range.contains(i))
                .map(|i| i - range.start)
                .collect(),
        }
    }
}

/// Follows the steady point along the ramp, seeding each solve with the
/// previous root.
pub fn ramp_to_control(
    ramp: &ChargeRamp,
    dp: &DerivedParams,
    params: &PhysicalParams,
) -> Result<ControlTrace> {
    let n = ramp.len();
    let mut trace = ControlTrace {
        times: ramp.times.clone(),
        n_q: ramp.n_q.clone(),
        q: Vec::with_capacity(n),
        n_photon: Vec::with_capacity(n),
        a: Vec::with_capacity(n),
        omega: Vec::with_capacity(n),
        phase: None,
        bistable_samples: Vec::new(),
    };
    let mut seed = None;
    for (i, &nq) in ramp.n_q.iter().enumerate() {
        let sp = solve_mirror(nq, dp, params, seed).map_err(|e| match e {
            Error::Solver { reason, .. } => Error::Solver {
                sample: Some(i),
                reason,
            },
            other => other,
        })?;
        if sp.branches > 1 {
            trace.bistable_samples.push(i);
        }
        seed = Some(sp.q);
        trace.q.push(sp.q);
        trace.n_photon.push(sp.n);
        trace.a.push(sp.a);
        trace.omega.push(sp.omega);
    }
    Ok(trace)
}

/// Mirror and cavity state for the transient integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OemState {
    pub q: f64,
    pub p: f64,
    pub a: C64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientOptions {
    /// Largest phase advance ω·dt per RK4 step, with ω the fastest local rate.
    pub max_phase_step: f64,
    /// Upper bound on RK4 steps per ramp interval before declaring underflow.
    pub max_substeps: u64,
}

impl Default for TransientOptions {
    fn default() -> Self {
        Self {
            max_phase_step: 0.05,
            max_substeps: 100_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientTrace {
    pub times: Vec<f64>,
    pub n_q: Vec<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub a: Vec<C64>,
    pub q_static: Vec<f64>,
    pub n_static: Vec<f64>,
    /// max |q − q_static| / |q_static| over the samples.
    pub max_rel_q_deviation: f64,
    /// max |n − n_static| / max n_static over the samples.
    pub max_rel_n_deviation: f64,
}

fn oem_rhs(
    s: &OemState,
    n_q: f64,
    dp: &DerivedParams,
    params: &PhysicalParams,
) -> OemState {
    let force = -dp.k_spring * s.q - params.gamma_m * s.p
        + HBAR * dp.g0 * s.a.norm_sqr()
        + n_q * dp.eta_coul;
    let da = -C64::new(params.kappa, params.drive_detuning - dp.g0 * s.q) * s.a + dp.eps_c;
    OemState {
        q: s.p / params.mirror_mass,
        p: force,
        a: da,
    }
}

fn axpy(s: &OemState, h: f64, k: &OemState) -> OemState {
    OemState {
        q: s.q + h * k.q,
        p: s.p + h * k.p,
        a: s.a + k.a * h,
    }
}

/// Integrates the classical mirror + cavity equations along a charge ramp
/// with RK4 (the atomic back-action on the cavity is dropped) and compares
/// with the quasi-static trace.
pub fn transient_oem(
    ramp: &ChargeRamp,
    dp: &DerivedParams,
    params: &PhysicalParams,
    init: OemState,
    opts: &TransientOptions,
) -> Result<TransientTrace> {
    let stat = ramp_to_control(ramp, dp, params)?;
    let n = ramp.len();
    let mut s = init;
    let mut q = vec![s.q];
    let mut p = vec![s.p];
    let mut a = vec![s.a];
    let base_rate = params.omega_m + params.kappa + params.gamma_m;

    for i in 0..n - 1 {
        let (t0, t1) = (ramp.times[i], ramp.times[i + 1]);
        let span = t1 - t0;
        let detuning = [s.q, stat.q[i], stat.q[i + 1]]
            .iter()
            .map(|x| (params.drive_detuning - dp.g0 * x).abs())
            .fold(0.0, f64::max);
        let rate = base_rate + detuning;
        let steps_f = (span * rate / opts.max_phase_step).ceil().max(1.0);
        if !steps_f.is_finite() || steps_f > opts.max_substeps as f64 {
            return Err(Error::Integration {
                xi: 0.0,
                tau: t0,
                reason: format!("step-size underflow: {steps_f:e} RK4 steps needed on one ramp interval"),
            });
        }
        let steps = steps_f as u64;
        let h = span / steps as f64;
        for k in 0..steps {
            let t = t0 + k as f64 * h;
            let nq0 = ramp.charge_at(t);
            let nqm = ramp.charge_at(t + 0.5 * h);
            let nq1 = ramp.charge_at(t + h);
            let k1 = oem_rhs(&s, nq0, dp, params);
            let k2 = oem_rhs(&axpy(&s, 0.5 * h, &k1), nqm, dp, params);
            let k3 = oem_rhs(&axpy(&s, 0.5 * h, &k2), nqm, dp, params);
            let k4 = oem_rhs(&axpy(&s, h, &k3), nq1, dp, params);
            s = OemState {
                q: s.q + h / 6.0 * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q),
                p: s.p + h / 6.0 * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p),
                a: s.a + (k1.a + k2.a * 2.0 + k3.a * 2.0 + k4.a) * (h / 6.0),
            };
        }
        if !(s.q.is_finite() && s.p.is_finite() && s.a.re.is_finite() && s.a.im.is_finite()) {
            return Err(Error::Integration {
                xi: 0.0,
                tau: t1,
                reason: "non-finite mirror/cavity state".into(),
            });
        }
        q.push(s.q);
        p.push(s.p);
        a.push(s.a);
    }

    let max_rel_q_deviation = q
        .iter()
        .zip(&stat.q)
        .map(|(x, xs)| (x - xs).abs() / xs.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let n_scale = stat.n_photon.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let max_rel_n_deviation = a
        .iter()
        .zip(&stat.n_photon)
        .map(|(z, ns)| (z.norm_sqr() - ns).abs() / n_scale)
        .fold(0.0, f64::max);

    Ok(TransientTrace {
        times: ramp.times.clone(),
        n_q: ramp.n_q.clone(),
        q,
        p,
        a,
        q_static: stat.q,
        n_static: stat.n_photon,
        max_rel_q_deviation,
        max_rel_n_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::derive;

    fn reference() -> (PhysicalParams, DerivedParams) {
        let p = PhysicalParams::reference();
        let d = derive(&p).unwrap();
        (p, d)
    }

    #[test]
    fn resonant_amplitude_is_maximal() {
        let (mut p, d) = reference();
        p.drive_detuning = 0.3 * p.kappa;
        let q = p.drive_detuning / d.g0;
        let a = cavity_amplitude(q, &d, &p);
        assert!((a - C64::new(d.eps_c / p.kappa, 0.0)).norm() / a.norm() < 1e-12);
    }

    #[test]
    fn no_drive_gives_zero_amplitude() {
        let (mut p, _) = reference();
        p.drive_power = 0.0;
        let d = derive(&p).unwrap();
        assert_eq!(cavity_amplitude(1e-12, &d, &p), C64::new(0.0, 0.0));
    }

    #[test]
    fn half_power_point() {
        // G0·q = κ at Δ = 0 → n = ε_c²/(2κ²)
        let (p, d) = reference();
        let q = p.kappa / d.g0;
        let n = cavity_amplitude(q, &d, &p).norm_sqr();
        let expect = d.eps_c * d.eps_c / (2.0 * p.kappa * p.kappa);
        assert!((n - expect).abs() / expect < 1e-12);
    }

    #[test]
    fn pure_coulomb_law_is_exact() {
        let (mut p, _) = reference();
        p.drive_power = 0.0;
        let d = derive(&p).unwrap();
        for n_q in [0.0, 1.0, 83.0, 1e3, 1e5] {
            let sp = solve_mirror(n_q, &d, &p, None).unwrap();
            assert_eq!(sp.q, n_q * d.eta_coul / d.k_spring);
            assert_eq!(sp.n, 0.0);
        }
    }

    #[test]
    fn radiation_pressure_only() {
        // fixed-point oracle: q ← ħG0·n(q)/k from q = 0
        let (p, d) = reference();
        let mut q = 0.0;
        for _ in 0..100 {
            q = HBAR * d.g0 * cavity_amplitude(q, &d, &p).norm_sqr() / d.k_spring;
        }
        let sp = solve_mirror(0.0, &d, &p, None).unwrap();
        assert!((sp.q - q).abs() / q < 1e-13);
        let linear = HBAR * d.g0 * d.max_photons(&p) / d.k_spring;
        let correction = (linear - sp.q).abs() / sp.q;
        assert!(correction < 1e-3, "correction {correction}");
        assert!(correction > 0.0);
    }

    #[test]
    fn approx_law_values() {
        let (p, d) = reference();
        assert_eq!(approx_mirror(0.0, &d), 0.0);
        // 1e3·8.821347e-9 N / 5133.667 N/m
        let q = approx_mirror(1e3, &d);
        assert!((q - 1.718_332_448_628_984_3e-9).abs() / q < 1e-12);
        for n_q in [100.0, 300.0, 1e3, 1e4] {
            let exact = solve_mirror(n_q, &d, &p, None).unwrap().q;
            let dev = (approx_mirror(n_q, &d) - exact).abs() / exact;
            assert!(dev < 0.01, "n_q = {n_q}: {dev}");
        }
    }

    #[test]
    fn bistable_branch_selection() {
        // Δ = 10κ, β ≈ 49 lies between the local extrema (≈ 10 and ≈ 151)
        // of x(1 + (D − x)²): three roots
        let (mut p, _) = reference();
        p.drive_detuning = 10.0 * p.kappa;
        p.drive_power = 6e-2;
        let d = derive(&p).unwrap();
        let roots = mirror_roots(0.0, &d, &p);
        assert_eq!(roots.len(), 3, "{roots:?}");
        let low = solve_mirror(0.0, &d, &p, None).unwrap();
        assert_eq!(low.q, roots[0]);
        assert_eq!(low.branches, 3);
        let high = solve_mirror(0.0, &d, &p, Some(roots[2] * 1.01)).unwrap();
        assert_eq!(high.q, roots[2]);
        for r in roots {
            assert!(force_residual(r, 0.0, &d, &p).abs() < 1e-18);
        }
    }

    #[test]
    fn negative_charge_rejected() {
        let (p, d) = reference();
        assert!(solve_mirror(-1.0, &d, &p, None).is_err());
    }

    #[test]
    fn root_beyond_charge_distance_is_an_error() {
        let (mut p, _) = reference();
        p.charge_distance = 1e-12;
        let d = derive(&p).unwrap();
        match solve_mirror(1e6, &d, &p, None) {
            Err(Error::Solver { .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ramp_validation() {
        assert!(ChargeRamp::new(vec![0.0, 0.0], vec![0.0, 0.0]).is_err());
        assert!(ChargeRamp::new(vec![0.0, 1.0], vec![0.0, -1.0]).is_err());
        let r = ChargeRamp::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 4.0]).unwrap();
        assert_eq!(r.charge_at(0.5), 1.0);
        assert_eq!(r.charge_at(2.0), 3.0);
        assert_eq!(r.charge_at(10.0), 4.0);
    }

    #[test]
    fn zero_ramp_gives_constant_control() {
        let (p, d) = reference();
        let ramp = ChargeRamp::new((0..10).map(|i| i as f64).collect(), vec![0.0; 10]).unwrap();
        let tr = ramp_to_control(&ramp, &d, &p).unwrap();
        let first = tr.omega[0];
        assert!(tr.omega.iter().all(|w| *w == first));
        let q0 = solve_mirror(0.0, &d, &p, None).unwrap().q;
        assert_eq!(first, cavity_amplitude(q0, &d, &p) * p.g);
        // g·ε_c/(κ + iΔ) up to the radiation-pressure shift G0·q0/κ ≈ 0.0097
        let bare = C64::new(d.eps_c * p.g, 0.0) / C64::new(p.kappa, p.drive_detuning);
        assert!((first - bare).norm() / bare.norm() < 1.5e-2);
    }

    #[test]
    fn ramp_failure_reports_sample() {
        // n_q = 1e9 would push the mirror ~1.7 mm, beyond r = 67 µm
        let (p, d) = reference();
        let ramp = ChargeRamp::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 1e9]).unwrap();
        match ramp_to_control(&ramp, &d, &p) {
            Err(Error::Solver { sample: Some(2), .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn transient_rests_at_fixed_point() {
        let (p, d) = reference();
        let n_q = 50.0;
        let sp = solve_mirror(n_q, &d, &p, None).unwrap();
        let times: Vec<f64> = (0..41).map(|i| i as f64 * 0.25e-6).collect();
        let ramp = ChargeRamp::new(times, vec![n_q; 41]).unwrap();
        let init = OemState { q: sp.q, p: 0.0, a: sp.a };
        let tr = transient_oem(&ramp, &d, &p, init, &TransientOptions::default()).unwrap();
        assert!(tr.max_rel_q_deviation < 1e-9, "{}", tr.max_rel_q_deviation);
        assert!(tr.max_rel_n_deviation < 1e-9, "{}", tr.max_rel_n_deviation);
    }
}
