use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value produced at step {step}: {what}")]
    NumericalOverflow { step: usize, what: &'static str },

    #[error("grid optimization failed at step {step}: {reason}")]
    Quantization { step: usize, reason: String },

    #[error("filter mass vanished at step {step}")]
    Extinct { step: usize },

    #[error("price {price:e} is {bound} the no-arbitrage band [{lower:e}, {upper:e}]")]
    OutOfBand {
        price: f64,
        lower: f64,
        upper: f64,
        bound: &'static str,
    },

    #[error("invalid survival curve: {0}")]
    InvalidCurve(String),

    #[error("degenerate contract: {0}")]
    DegenerateContract(String),

    #[error("particle weights collapsed at step {step}; retry with at least {suggested_particles} particles")]
    WeightCollapse {
        step: usize,
        suggested_particles: usize,
    },

    #[error("instance too large for exhaustive enumeration: {0}")]
    InstanceTooLarge(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
