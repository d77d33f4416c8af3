//! Core engine: exact arithmetic over Q(sqrt2) and the coefficient field,
//! Hecke eigendata and base change, truncated Hilbert modular form expansions,
//! the formal integral-reduction rewrite engine, elliptic curve numerics, and
//! the instance-level ATC point pipeline.

pub mod atrpoint;
pub mod eigendata;
pub mod elliptic;
pub mod hmfexp;
pub mod nfq;
pub mod reduction;

use thiserror::Error;

/// Errors surfaced by the core modules, tagged by pipeline stage.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("nfq: {0}")]
    Nfq(String),
    #[error("eigendata: {0}")]
    EigenData(String),
    #[error("insufficient eigenvalue data: {0}")]
    InsufficientData(String),
    #[error("hmfexp: {0}")]
    Expansion(String),
    #[error("reduction script rejected at step {step}: {reason}")]
    ScriptRejected { step: usize, reason: String },
    #[error("elliptic: {0}")]
    Elliptic(String),
    #[error("atrpoint: {0}")]
    AtrPoint(String),
    #[error("precision budget violated: {0}")]
    PrecisionBudget(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
