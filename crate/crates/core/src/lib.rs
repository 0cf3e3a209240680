//! Electrically controlled light storage in an atomic ensemble held inside an
//! opto-electro-mechanical cavity.
//!
//! A charged object pulls on the cavity mirror, detuning the cavity and
//! switching the intracavity control field that drives the atoms. The crate
//! covers the mirror/cavity steady state, the charge-pulse protocol, the
//! full and linearized Maxwell-Bloch integrators, and input-pulse
//! optimization.

pub mod constants;
pub mod error;
pub mod finding;
pub mod grid;
pub mod io;
pub mod mbloch_full;
pub mod mbloch_reduced;
pub mod oem_steady;
pub mod optimize;
pub mod params;
pub mod protocol;

pub use error::{Error, Result};
pub use finding::{Finding, Severity};
pub use grid::{Field2, GridSpec, Scheme};
pub use params::{derive, nondimensionalize, DerivedParams, PhysicalParams, ScaledConfig};
