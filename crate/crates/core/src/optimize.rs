//! Iterative time-reversal optimization of the probe envelope.
//!
//! Storage maps an input envelope x(τ) to the spin wave S(ξ, T). Running
//! the same equations from conj(S(1 − ξ, T)) with the control
//! conj(Ω(T − τ)) and no input produces an output whose conjugated time
//! mirror is the adjoint of that map applied to S. One iteration is
//! therefore a power-iteration step on M†M: the stored energy and the
//! round-trip energy both increase monotonically and the envelope converges
//! to the optimal input for the given control and optical depth.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{energy, inner, GridSpec};
use crate::mbloch_reduced::{propagate_reduced, Initial};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Largest decrease of the round-trip efficiency accepted between
/// iterations before the run is declared inaccurate.
pub const MONOTONE_SLACK: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizeOptions {
    pub max_iter: usize,
    /// Convergence tolerance on the change of eta_total. The envelope must
    /// also have settled to within 10·tol_iter in L² norm.
    pub tol_iter: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            max_iter: 20,
            tol_iter: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Iteration {
    /// Unit-energy input envelope on the τ grid.
    #[serde(skip)]
    pub input: Vec<C64>,
    pub eta_s: f64,
    /// Storage followed by time-reversed backward retrieval.
    pub eta_total: f64,
    /// L² distance between this input and the next one, after phase alignment.
    pub envelope_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationRun {
    pub optical_depth: f64,
    pub iterations: Vec<Iteration>,
    pub converged: bool,
    pub tol_iter: f64,
}

impl OptimizationRun {
    pub fn last(&self) -> &Iteration {
        self.iterations.last().expect("at least one iteration")
    }

    /// Input of the last completed iteration.
    pub fn optimal_input(&self) -> &[C64] {
        &self.last().input
    }

    pub fn etas(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.eta_total).collect()
    }
}

/// Unit-energy Gaussian centered in the window with standard deviation
/// one eighth of the window.
pub fn seed_input(grid: &GridSpec) -> Vec<C64> {
    let t0 = 0.5 * grid.tau_max;
    let w = grid.tau_max / 8.0;
    let raw: Vec<C64> = grid
        .taus()
        .iter()
        .map(|t| C64::new((-0.5 * ((t - t0) / w).powi(2)).exp(), 0.0))
        .collect();
    normalize(raw, grid.dtau())
}

fn normalize(v: Vec<C64>, dt: f64) -> Vec<C64> {
    let e = energy(&v, dt).sqrt();
    if e == 0.0 {
        return v;
    }
    v.into_iter().map(|z| z / e).collect()
}

/// Spin wave left at T by storing `input` with `control`.
pub fn store(
    input: &[C64],
    control: &[C64],
    d: f64,
    delta_p: f64,
    grid: &GridSpec,
) -> Result<Vec<C64>> {
    Ok(propagate_reduced(input, control, d, delta_p, grid, Initial::default(), false)?.s_final)
}

/// Adjoint of the storage map applied to a spin wave, returned on the
/// forward input time axis.
pub fn adjoint_retrieve(
    spin: &[C64],
    control: &[C64],
    d: f64,
    delta_p: f64,
    grid: &GridSpec,
) -> Result<Vec<C64>> {
    let s0: Vec<C64> = spin.iter().rev().map(|z| z.conj()).collect();
    let ctl: Vec<C64> = control.iter().rev().map(|z| z.conj()).collect();
    let input = vec![ZERO; grid.n_tau];
    let st = propagate_reduced(
        &input,
        &ctl,
        d,
        delta_p,
        grid,
        Initial { p: None, s: Some(&s0) },
        false,
    )?;
    Ok(st.output.iter().rev().map(|z| z.conj()).collect())
}

/// Optimizes the input envelope from the default Gaussian seed.
pub fn optimize_input(
    d: f64,
    control: &[C64],
    delta_p: f64,
    grid: &GridSpec,
    opts: &OptimizeOptions,
) -> Result<OptimizationRun> {
    optimize_from(seed_input(grid), d, control, delta_p, grid, opts)
}

pub fn optimize_from(
    seed: Vec<C64>,
    d: f64,
    control: &[C64],
    delta_p: f64,
    grid: &GridSpec,
    opts: &OptimizeOptions,
) -> Result<OptimizationRun> {
    if opts.max_iter < 1 {
        return Err(Error::domain("max_iter", "must be >= 1"));
    }
    if !(opts.tol_iter.is_finite() && opts.tol_iter > 0.0) {
        return Err(Error::domain("tol_iter", format!("must be > 0, got {}", opts.tol_iter)));
    }
    let dt = grid.dtau();
    let mut x = normalize(seed, dt);
    if energy(&x, dt) == 0.0 {
        return Err(Error::domain("seed", "zero input envelope"));
    }
    let mut iterations: Vec<Iteration> = Vec::new();
    let mut converged = false;

    for _ in 0..opts.max_iter {
        let spin = store(&x, control, d, delta_p, grid)?;
        let eta_s = energy(&spin, grid.dxi());
        let y = adjoint_retrieve(&spin, control, d, delta_p, grid)?;
        let eta_total = energy(&y, dt);

        if let Some(prev) = iterations.last() {
            if eta_total < prev.eta_total - MONOTONE_SLACK {
                return Err(Error::Accuracy(format!(
                    "eta_total decreased from {} to {} between iterations; refine the grid",
                    prev.eta_total, eta_total
                )));
            }
        }

        let mut next = normalize(y, dt);
        let overlap = inner(&x, &next, dt);
        if overlap.norm() > 0.0 {
            let phase = overlap.conj() / overlap.norm();
            next.iter_mut().for_each(|z| *z *= phase);
        }
        let diff: Vec<C64> = next.iter().zip(&x).map(|(a, b)| a - b).collect();
        let envelope_change = energy(&diff, dt).sqrt();

        let delta_eta = iterations.last().map(|p| (eta_total - p.eta_total).abs());
        iterations.push(Iteration {
            input: std::mem::replace(&mut x, next),
            eta_s,
            eta_total,
            envelope_change,
        });
        if delta_eta.is_some_and(|de| de < opts.tol_iter) && envelope_change < 10.0 * opts.tol_iter {
            converged = true;
            break;
        }
    }

    Ok(OptimizationRun {
        optical_depth: d,
        iterations,
        converged,
        tol_iter: opts.tol_iter,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthPoint {
    pub optical_depth: f64,
    pub eta_total: f64,
    pub eta_s: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Optimal round-trip efficiency for each optical depth, computed in
/// parallel and returned in the order of `depths`.
pub fn efficiency_vs_depth(
    depths: &[f64],
    control: &[C64],
    delta_p: f64,
    grid: &GridSpec,
    opts: &OptimizeOptions,
) -> Result<Vec<DepthPoint>> {
    if let Some(d) = depths.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Error::domain("optical_depth", format!("must be > 0, got {d}")));
    }
    depths
        .par_iter()
        .map(|&d| {
            let run = optimize_input(d, control, delta_p, grid, opts)?;
            let last = run.last();
            Ok(DepthPoint {
                optical_depth: d,
                eta_total: last.eta_total,
                eta_s: last.eta_s,
                iterations: run.iterations.len(),
                converged: run.converged,
            })
        })
        .collect()
}
