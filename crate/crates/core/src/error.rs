use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Hypotheses a problem instance has to satisfy before the solver accepts it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Hypothesis {
    A1,
    A2,
    ALambda,
    G1,
    G2,
    G3,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Hypothesis::A1 => "(A1)",
            Hypothesis::A2 => "(A2)",
            Hypothesis::ALambda => "(A,λ)",
            Hypothesis::G1 => "(g1)",
            Hypothesis::G2 => "(g2)",
            Hypothesis::G3 => "(g3)",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("field does not live on this domain")]
    DomainMismatch,
    #[error("hypothesis {hypothesis} violated: {detail}")]
    HypothesisViolation { hypothesis: Hypothesis, detail: String },
    #[error("operation undefined for the zero field")]
    ZeroField,
    #[error("Nehari projection failed: {0}")]
    ProjectionFailure(String),
    #[error("field is not sign-changing: {0}")]
    NotSignChanging(String),
    #[error("degenerate field: {0}")]
    DegenerateField(String),
    #[error("preconditioner setup failed: {0}")]
    Factorization(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn hypothesis(hypothesis: Hypothesis, detail: impl Into<String>) -> Self {
        Error::HypothesisViolation { hypothesis, detail: detail.into() }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
