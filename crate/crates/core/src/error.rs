use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A function was evaluated outside its domain (non-finite input, negative epsilon).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("mechanism error: {0}")]
    Mechanism(String),

    /// Structurally valid input that violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(
        "optimizer did not converge after {iterations} iterations (gradient inf-norm {grad_norm:.3e})"
    )]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("line search failed at iteration {iteration} (gradient inf-norm {grad_norm:.3e})")]
    LineSearch { iteration: usize, grad_norm: f64 },

    #[error("fit failed for candidate `{candidate}`: {source}")]
    Candidate {
        candidate: String,
        #[source]
        source: Box<Error>,
    },

    #[error("dataset not installed: {0}")]
    MissingData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the CLI: 1 validation, 2 convergence, 3 missing data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotConverged { .. } | Error::LineSearch { .. } => 2,
            Error::Candidate { source, .. } => source.exit_code(),
            Error::MissingData(_) => 3,
            _ => 1,
        }
    }

    pub fn is_convergence_failure(&self) -> bool {
        self.exit_code() == 2
    }
}
