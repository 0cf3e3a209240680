//! Physical inputs, derived couplings and the γ-scaled unit system.
//!
//! Every quantity in [`PhysicalParams`] is SI. [`derive`] computes the
//! couplings used by the mirror/cavity solver, and [`nondimensionalize`]
//! rescales rates by the excited-state decay rate γ so that the atomic
//! integrators work in units of 1/γ on a medium coordinate ξ ∈ [0, 1].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{ELEMENTARY_CHARGE, HBAR, SPEED_OF_LIGHT, VACUUM_PERMITTIVITY};
use crate::error::{Error, Result};
use crate::finding::{Finding, Severity};
use crate::grid::GridSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Drive wavelength λ_c [m].
    pub lambda_c: f64,
    /// Cavity length L [m].
    pub cavity_length: f64,
    /// Mirror mass m [kg].
    pub mirror_mass: f64,
    /// Mirror angular frequency ω_m [rad/s].
    pub omega_m: f64,
    /// Mirror damping rate γ_m [rad/s].
    pub gamma_m: f64,
    /// Cavity decay rate κ [rad/s].
    pub kappa: f64,
    /// Mirror to charged-object distance r [m].
    pub charge_distance: f64,
    /// Drive power P_c [W].
    pub drive_power: f64,
    /// Mirror capacitance C [F].
    pub capacitance: f64,
    /// Mirror voltage U [V].
    pub voltage: f64,
    /// Atom-photon interaction volume [m³].
    pub mode_volume: f64,
    /// Excited-state decay rate γ [rad/s].
    pub gamma: f64,
    /// Cavity-atom coupling g [rad/s].
    pub g: f64,
    /// Probe-atom coupling g_p [rad/s].
    pub g_p: f64,
    /// Number of atoms N.
    pub n_atoms: f64,
    /// Medium length l [m].
    pub medium_length: f64,
    /// Cavity-drive detuning Δ = ω₀ − ω_c [rad/s].
    pub drive_detuning: f64,
    /// Probe one-photon detuning Δ_p [rad/s].
    pub probe_detuning: f64,
    /// Control (cavity) one-photon detuning δ [rad/s].
    pub control_detuning: f64,
}

impl PhysicalParams {
    /// Parameters of the optomechanical cavity used for the bundled storage runs,
    /// with an atomic sector (γ = 2π·3 MHz, d = 25) chosen for the bundled
    /// scenarios.
    pub fn reference() -> Self {
        let gamma = 2.0 * PI * 3.0e6;
        let g = 2.0 * PI * 285.0;
        let medium_length = 1.0e-2;
        let mut p = Self {
            lambda_c: 795e-9,
            cavity_length: 25e-3,
            mirror_mass: 145e-12,
            omega_m: 2.0 * PI * 947e3,
            gamma_m: 2.0 * PI * 141.0,
            kappa: 2.0 * PI * 215e3,
            charge_distance: 67e-6,
            drive_power: 12e-6,
            capacitance: 27.5e-9,
            voltage: 1.0,
            mode_volume: 8e-9,
            gamma,
            g,
            g_p: g,
            n_atoms: 0.0,
            medium_length,
            drive_detuning: 0.0,
            probe_detuning: 0.1 * gamma,
            control_detuning: 0.1 * gamma,
        };
        p.n_atoms = p.atoms_for_depth(25.0);
        p
    }

    /// Atom number giving optical depth `d` with the current g, l and γ.
    pub fn atoms_for_depth(&self, d: f64) -> f64 {
        d * SPEED_OF_LIGHT * self.gamma / (self.g * self.g * self.medium_length)
    }

    fn strictly_positive(&self) -> [(&'static str, f64); 15] {
        [
            ("lambda_c", self.lambda_c),
            ("cavity_length", self.cavity_length),
            ("mirror_mass", self.mirror_mass),
            ("omega_m", self.omega_m),
            ("gamma_m", self.gamma_m),
            ("kappa", self.kappa),
            ("charge_distance", self.charge_distance),
            ("drive_power", self.drive_power),
            ("capacitance", self.capacitance),
            ("mode_volume", self.mode_volume),
            ("gamma", self.gamma),
            ("g", self.g),
            ("g_p", self.g_p),
            ("n_atoms", self.n_atoms),
            ("medium_length", self.medium_length),
        ]
    }

    /// Blocking findings for every field that violates its sign/finiteness
    /// constraint. Drive power and voltage may be zero.
    pub fn check(&self) -> Vec<Finding> {
        let mut out = Vec::new();
        for (name, v) in self.strictly_positive() {
            let zero_ok = name == "drive_power";
            if !v.is_finite() || v < 0.0 || (v == 0.0 && !zero_ok) {
                out.push(Finding::blocking(
                    "param-range",
                    format!("`{name}` must be finite and strictly positive, got {v}"),
                ));
            }
        }
        for (name, v) in [
            ("voltage", self.voltage),
            ("drive_detuning", self.drive_detuning),
            ("probe_detuning", self.probe_detuning),
            ("control_detuning", self.control_detuning),
        ] {
            if !v.is_finite() {
                out.push(Finding::blocking(
                    "param-range",
                    format!("`{name}` must be finite, got {v}"),
                ));
            }
        }
        out
    }
}

/// Couplings and scales computed from [`PhysicalParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedParams {
    /// Drive angular frequency 2πc/λ_c [rad/s].
    pub omega_c: f64,
    /// Optomechanical coupling ω_c/L [rad/(s·m)].
    pub g0: f64,
    /// Drive amplitude √(2P_cκ/ħω_c) [s⁻¹].
    pub eps_c: f64,
    /// Mirror charge C·U [C].
    pub q_mr: f64,
    /// Coulomb force per charge |e|Q_mr/(4πε₀r²) [N].
    pub eta_coul: f64,
    /// Mirror spring constant mω_m² [N/m].
    pub k_spring: f64,
    /// Optical depth g²Nl/(cγ).
    pub optical_depth: f64,
    pub delta_p_tilde: f64,
    pub delta_tilde: f64,
}

impl DerivedParams {
    /// Resonant intracavity photon number |ε_c|²/κ².
    pub fn max_photons(&self, params: &PhysicalParams) -> f64 {
        (self.eps_c / params.kappa).powi(2)
    }
}

pub fn derive(params: &PhysicalParams) -> Result<DerivedParams> {
    if let Some(f) = params.check().first() {
        return Err(Error::domain("params", f.message.clone()));
    }
    let omega_c = 2.0 * PI * SPEED_OF_LIGHT / params.lambda_c;
    let g0 = omega_c / params.cavity_length;
    let eps_c = (2.0 * params.drive_power * params.kappa / (HBAR * omega_c)).sqrt();
    let q_mr = params.capacitance * params.voltage;
    let eta_coul = ELEMENTARY_CHARGE * q_mr
        / (4.0 * PI * VACUUM_PERMITTIVITY * params.charge_distance * params.charge_distance);
    let k_spring = params.mirror_mass * params.omega_m * params.omega_m;
    let optical_depth =
        params.g * params.g * params.n_atoms * params.medium_length / (SPEED_OF_LIGHT * params.gamma);
    let dp = DerivedParams {
        omega_c,
        g0,
        eps_c,
        q_mr,
        eta_coul,
        k_spring,
        optical_depth,
        delta_p_tilde: params.probe_detuning / params.gamma,
        delta_tilde: params.control_detuning / params.gamma,
    };
    for (name, v) in [
        ("omega_c", dp.omega_c),
        ("g0", dp.g0),
        ("eps_c", dp.eps_c),
        ("q_mr", dp.q_mr),
        ("eta_coul", dp.eta_coul),
        ("k_spring", dp.k_spring),
        ("optical_depth", dp.optical_depth),
        ("delta_p_tilde", dp.delta_p_tilde),
        ("delta_tilde", dp.delta_tilde),
    ] {
        if !v.is_finite() {
            return Err(Error::domain(name, format!("non-finite derived value {v}")));
        }
        if v == 0.0 && matches!(name, "g0" | "k_spring" | "optical_depth") {
            return Err(Error::domain(name, "underflowed to zero"));
        }
    }
    Ok(dp)
}

/// Rates and grid in γ units. Time is measured in 1/γ and the medium
/// coordinate runs over ξ ∈ [0, 1] with probe coupling √d.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledConfig {
    /// The scale itself, γ [rad/s].
    pub gamma: f64,
    pub optical_depth: f64,
    pub delta_p: f64,
    pub delta: f64,
    pub drive_detuning: f64,
    pub kappa: f64,
    pub gamma_m: f64,
    pub grid: GridSpec,
}

/// The SI rates recovered from a [`ScaledConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiRates {
    pub probe_detuning: f64,
    pub control_detuning: f64,
    pub drive_detuning: f64,
    pub kappa: f64,
    pub gamma_m: f64,
    /// Grid duration [s].
    pub duration: f64,
}

pub fn nondimensionalize(
    params: &PhysicalParams,
    derived: &DerivedParams,
    grid: &GridSpec,
) -> Result<ScaledConfig> {
    let gamma = params.gamma;
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::domain("gamma", format!("must be > 0, got {gamma}")));
    }
    Ok(ScaledConfig {
        gamma,
        optical_depth: derived.optical_depth,
        delta_p: params.probe_detuning / gamma,
        delta: params.control_detuning / gamma,
        drive_detuning: params.drive_detuning / gamma,
        kappa: params.kappa / gamma,
        gamma_m: params.gamma_m / gamma,
        grid: grid.clone(),
    })
}

pub fn redimensionalize(scaled: &ScaledConfig) -> SiRates {
    let g = scaled.gamma;
    SiRates {
        probe_detuning: scaled.delta_p * g,
        control_detuning: scaled.delta * g,
        drive_detuning: scaled.drive_detuning * g,
        kappa: scaled.kappa * g,
        gamma_m: scaled.gamma_m * g,
        duration: scaled.grid.tau_max / g,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeCheck {
    /// Coulomb force dominates radiation pressure.
    CoulombDominance,
    /// Mirror displacement small against the charge distance.
    SmallDisplacement,
    /// κ and γ_m relative to γ (reported, not enforced).
    DecayOrdering,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeFinding {
    pub check: RegimeCheck,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub message: String,
}

impl RegimeFinding {
    pub fn to_finding(&self) -> Finding {
        let severity = match (self.check, self.passed) {
            (RegimeCheck::DecayOrdering, _) | (_, true) => Severity::Info,
            _ => Severity::Advisory,
        };
        let code = match self.check {
            RegimeCheck::CoulombDominance => "regime-coulomb-dominance",
            RegimeCheck::SmallDisplacement => "regime-small-displacement",
            RegimeCheck::DecayOrdering => "regime-decay-ordering",
        };
        Finding::new(severity, code, self.message.clone())
    }
}

/// Minimum Coulomb/radiation force ratio accepted as "much bigger".
pub const COULOMB_DOMINANCE_RATIO: f64 = 100.0;
/// Largest q/r accepted for the linearized Coulomb potential.
pub const SMALL_DISPLACEMENT_RATIO: f64 = 0.01;

/// Regime findings at the operating charge `n_q`. The radiation force is
/// evaluated at the resonant photon number, the worst case along a ramp.
pub fn validate_regime(
    params: &PhysicalParams,
    derived: &DerivedParams,
    n_q: f64,
) -> Vec<RegimeFinding> {
    let f_rad = HBAR * derived.g0 * derived.max_photons(params);
    let f_coul = n_q * derived.eta_coul;
    let ratio = if f_rad > 0.0 { f_coul / f_rad } else { f64::INFINITY };
    let coulomb = RegimeFinding {
        check: RegimeCheck::CoulombDominance,
        passed: ratio >= COULOMB_DOMINANCE_RATIO,
        value: ratio,
        threshold: COULOMB_DOMINANCE_RATIO,
        message: format!(
            "Coulomb force {f_coul:.3e} N vs radiation pressure {f_rad:.3e} N (ratio {ratio:.3e}, need >= {COULOMB_DOMINANCE_RATIO})"
        ),
    };

    // Upper bound on the displacement: full Coulomb plus resonant radiation force.
    let q_max = (f_coul + f_rad) / derived.k_spring;
    let displacement = displacement_check(q_max, params.charge_distance);

    let kg = params.kappa / params.gamma;
    let mg = params.gamma_m / params.gamma;
    let ordering = RegimeFinding {
        check: RegimeCheck::DecayOrdering,
        passed: true,
        value: kg,
        threshold: 1.0,
        message: format!("kappa/gamma = {kg:.4e}, gamma_m/gamma = {mg:.4e}"),
    };
    vec![coulomb, displacement, ordering]
}

/// The q ≪ r condition for a given displacement.
pub fn displacement_check(q: f64, r: f64) -> RegimeFinding {
    let ratio = (q / r).abs();
    RegimeFinding {
        check: RegimeCheck::SmallDisplacement,
        passed: ratio <= SMALL_DISPLACEMENT_RATIO,
        value: ratio,
        threshold: SMALL_DISPLACEMENT_RATIO,
        message: format!("q/r = {ratio:.3e} (need <= {SMALL_DISPLACEMENT_RATIO})"),
    }
}
