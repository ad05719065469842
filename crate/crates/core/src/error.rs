use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("numeric overflow in the matrix of species {species} (entry {value})")]
    NumericOverflow { species: usize, value: f64 },

    #[error("state outside the model domain: {0}")]
    Domain(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("perturbation of size {delta} deviates by {deviation} at state {witness:?}")]
    PerturbationTooLarge {
        delta: f64,
        deviation: f64,
        witness: Vec<f64>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
