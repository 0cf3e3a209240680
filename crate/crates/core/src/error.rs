use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input or derived quantity is outside its valid domain.
    #[error("domain error in `{field}`: {reason}")]
    Domain { field: String, reason: String },

    /// Steady-state root finding failed. `sample` is set when the failure
    /// happened while following a charge ramp.
    #[error("solver error{}: {reason}", sample.map(|i| format!(" at ramp sample {i}")).unwrap_or_default())]
    Solver { sample: Option<usize>, reason: String },

    /// Non-finite values or step-size collapse during time integration.
    #[error("integration error at xi={xi}, tau={tau}: {reason}")]
    Integration { xi: f64, tau: f64, reason: String },

    /// A conservation or accuracy check exceeded its tolerance.
    #[error("accuracy error: {0}")]
    Accuracy(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Domain {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics (as opposed to bad inputs or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Solver { .. } | Error::Integration { .. } | Error::Accuracy(_)
        )
    }
}
