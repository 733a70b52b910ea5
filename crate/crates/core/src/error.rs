use thiserror::Error;

use crate::markov::ReturnRecord;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("value {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("quadrature did not converge: achieved error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("inverse branch solver failed at pullback depth {depth} (target {target})")]
    InverseSolver { depth: usize, target: f64 },

    #[error("excursion truncated after {} steps", partial.phi)]
    Truncated { partial: Box<ReturnRecord> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient samples: {0}")]
    Starved(String),

    #[error("sign-convention error: {0}")]
    Convention(String),
}

pub type Result<T> = std::result::Result<T, Error>;
