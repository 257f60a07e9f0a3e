use thiserror::Error;

use crate::levy::DomainStrip;

/// Errors raised by the hedging engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("Re(z) = {re} lies outside the strip {strip}")]
    OutOfDomain { re: f64, strip: DomainStrip },

    #[error("model degeneracy: {0}")]
    Degenerate(String),

    #[error("structure condition violated: {0}")]
    StructureCondition(String),

    #[error("no admissible abscissa: {0}")]
    Admissibility(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
