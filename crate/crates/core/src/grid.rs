//! Comoving (ξ, τ) grids and quadrature helpers.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Fourth-order Runge-Kutta in τ, with the probe re-swept along ξ at
    /// every stage.
    ExplicitPc,
    /// Implicit midpoint in τ coupled node by node to the ξ trapezoid.
    #[default]
    ImplicitMidpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_xi: usize,
    pub n_tau: usize,
    /// Duration in units of 1/γ.
    pub tau_max: f64,
    #[serde(default)]
    pub scheme: Scheme,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_xi: 256,
            n_tau: 256,
            tau_max: 40.0,
            scheme: Scheme::ImplicitMidpoint,
        }
    }
}

impl GridSpec {
    pub fn new(n_xi: usize, n_tau: usize, tau_max: f64) -> Self {
        Self {
            n_xi,
            n_tau,
            tau_max,
            scheme: Scheme::default(),
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_xi < 2 {
            return Err(Error::domain("grid.n_xi", format!("need >= 2, got {}", self.n_xi)));
        }
        if self.n_tau < 2 {
            return Err(Error::domain("grid.n_tau", format!("need >= 2, got {}", self.n_tau)));
        }
        if !(self.tau_max.is_finite() && self.tau_max > 0.0) {
            return Err(Error::domain("grid.tau_max", format!("must be > 0, got {}", self.tau_max)));
        }
        Ok(())
    }

    pub fn dxi(&self) -> f64 {
        1.0 / (self.n_xi - 1) as f64
    }

    pub fn dtau(&self) -> f64 {
        self.tau_max / (self.n_tau - 1) as f64
    }

    pub fn tau(&self, n: usize) -> f64 {
        n as f64 * self.dtau()
    }

    pub fn xi(&self, j: usize) -> f64 {
        j as f64 * self.dxi()
    }

    pub fn taus(&self) -> Vec<f64> {
        (0..self.n_tau).map(|n| self.tau(n)).collect()
    }

    /// Same spacing, `factor` times as many intervals in each direction.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n_xi: (self.n_xi - 1) * factor + 1,
            n_tau: (self.n_tau - 1) * factor + 1,
            ..self.clone()
        }
    }
}

/// Complex field sampled on the grid, row-major with τ as the slow index.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2 {
    pub n_tau: usize,
    pub n_xi: usize,
    pub data: Vec<C64>,
}

impl Field2 {
    pub fn zeros(n_tau: usize, n_xi: usize) -> Self {
        Self {
            n_tau,
            n_xi,
            data: vec![C64::new(0.0, 0.0); n_tau * n_xi],
        }
    }

    #[inline]
    pub fn at(&self, n: usize, j: usize) -> C64 {
        self.data[n * self.n_xi + j]
    }

    #[inline]
    pub fn set(&mut self, n: usize, j: usize, v: C64) {
        self.data[n * self.n_xi + j] = v;
    }

    pub fn row(&self, n: usize) -> &[C64] {
        &self.data[n * self.n_xi..(n + 1) * self.n_xi]
    }

    pub fn row_mut(&mut self, n: usize) -> &mut [C64] {
        &mut self.data[n * self.n_xi..(n + 1) * self.n_xi]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.n_tau).map(|n| self.at(n, j)).collect()
    }

    pub fn last_row(&self) -> &[C64] {
        self.row(self.n_tau - 1)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Trapezoidal ∫ f over uniformly spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])),
    }
}

/// Trapezoidal ∫ |z|² over uniformly spaced samples.
pub fn energy(values: &[C64], h: f64) -> f64 {
    let sq: Vec<f64> = values.iter().map(|z| z.norm_sqr()).collect();
    trapezoid(&sq, h)
}

/// Trapezoidal ∫ conj(a)·b.
pub fn inner(a: &[C64], b: &[C64], h: f64) -> C64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return C64::new(0.0, 0.0);
    }
    let mut s: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    s -= 0.5 * (a[0].conj() * b[0] + a[n - 1].conj() * b[n - 1]);
    s * h
}

/// Piecewise-linear interpolation of samples `(ts, ys)` onto `targets`.
/// Targets outside the sample span take the nearest end value.
pub fn resample_linear(ts: &[f64], ys: &[C64], targets: &[f64]) -> Vec<C64> {
    assert_eq!(ts.len(), ys.len());
    assert!(!ts.is_empty());
    let mut out = Vec::with_capacity(targets.len());
    let mut k = 0;
    for &t in targets {
        if t <= ts[0] {
            out.push(ys[0]);
            continue;
        }
        if t >= ts[ts.len() - 1] {
            out.push(ys[ys.len() - 1]);
            continue;
        }
        while k + 1 < ts.len() && ts[k + 1] < t {
            k += 1;
        }
        while k > 0 && ts[k] > t {
            k -= 1;
        }
        let w = (t - ts[k]) / (ts[k + 1] - ts[k]);
        out.push(ys[k] * (1.0 - w) + ys[k + 1] * w);
    }
    out
}
