use nehari::{Error, Hypothesis};

/// Run outcome other than success, with its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("hypothesis {hypothesis} violated: {detail}")]
    Hypothesis { hypothesis: Hypothesis, detail: String },
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("invariant failure: {0}")]
    Invariant(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Hypothesis { .. } => 2,
            Failure::NonConvergence(_) => 3,
            Failure::Invariant(_) => 4,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::HypothesisViolation { hypothesis, detail } => Failure::Hypothesis { hypothesis, detail },
            Error::ZeroField
            | Error::ProjectionFailure(_)
            | Error::NotSignChanging(_)
            | Error::DegenerateField(_)
            | Error::Solver(_) => Failure::NonConvergence(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(format!("i/o: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Config(format!("json: {e}"))
    }
}
