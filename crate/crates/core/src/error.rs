use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid range for {name}: {detail}")]
    InvalidRange { name: &'static str, detail: String },

    #[error("timestep {t} out of range 1..={num_steps}")]
    TimestepOutOfRange { t: usize, num_steps: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("matrix is not symmetric positive-definite ({context})")]
    NotPositiveDefinite { context: &'static str },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("non-finite state at timestep {t} ({stage})")]
    NonFinite { t: usize, stage: &'static str },

    #[error(
        "warm-up diverged at timestep {t}, inner step {j}: objective {objective:e} exceeds \
         {factor:e} x initial {initial:e}; reduce the guidance step size"
    )]
    Diverged {
        t: usize,
        j: usize,
        objective: f64,
        initial: f64,
        factor: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
