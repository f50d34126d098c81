use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid mass {value} at position {position}: masses must be finite and non-negative")]
    InvalidMass { position: usize, value: f64 },

    #[error("index error: {0}")]
    Index(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid dislocation atom: {0}")]
    InvalidAtom(String),

    #[error("cannot sample from an empty dislocation measure")]
    EmptyMeasure,

    #[error("state space truncation: {0}")]
    Truncation(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("input error: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, Error>;
