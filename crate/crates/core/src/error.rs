use thiserror::Error;

use crate::numerics::CMat;

pub type Result<T, E = IsacError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum IsacError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is singular or indefinite: eigenvalue {eigenvalue:e} is below {threshold:e}")]
    Singular { eigenvalue: f64, threshold: f64 },

    #[error("bisection bracket [{lo}, {hi}] does not enclose the target (residuals {f_lo:e}, {f_hi:e})")]
    Bracketing { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("polynomial has no nonnegative real root")]
    InfeasibleRoot,

    #[error("correlation matrices do not share an eigenbasis (relative commutator {0:e})")]
    MisalignedCorrelations(f64),

    #[error("starting point is not strictly feasible: {0}")]
    InfeasibleStart(String),

    #[error("numerical failure: {message}")]
    Numerical {
        message: String,
        snapshot: Option<Box<CMat>>,
    },

    #[error("solve cancelled after {iterations} iterations")]
    Cancelled { iterations: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<IsacError>,
    },
}

impl IsacError {
    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        IsacError::Numerical {
            message: message.into(),
            snapshot: None,
        }
    }

    pub(crate) fn numerical_at(message: impl Into<String>, iterate: &CMat) -> Self {
        IsacError::Numerical {
            message: message.into(),
            snapshot: Some(Box::new(iterate.clone())),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        IsacError::InvalidInput(message.into())
    }

    /// Prefixes the message with the name of the scheme or stage that failed.
    pub fn context(self, what: &str) -> Self {
        match self {
            IsacError::Numerical { message, snapshot } => IsacError::Numerical {
                message: format!("{what}: {message}"),
                snapshot,
            },
            IsacError::InvalidInput(m) => IsacError::InvalidInput(format!("{what}: {m}")),
            IsacError::Config(m) => IsacError::Config(format!("{what}: {m}")),
            io @ IsacError::Io(_) => io,
            other => IsacError::Context { context: what.to_string(), source: Box::new(other) },
        }
    }

    /// The innermost error beneath any added context.
    pub fn root(&self) -> &IsacError {
        match self {
            IsacError::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
