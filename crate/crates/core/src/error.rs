use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("normal matrix is singular with ridge = 0; retry with ridge > 0")]
    SingularNormalMatrix,

    #[error("cannot place {requested} centers from {available} samples")]
    TooFewSamples { requested: usize, available: usize },

    #[error("history window holds {have} records, needs {need}")]
    UnderfullWindow { have: usize, need: usize },

    #[error("covariance is not positive definite (Cholesky failed); symmetrize and add jitter to the diagonal")]
    CovarianceNotSpd,

    #[error("mpc_coeffs: alpha* = {0} makes ln(alpha*) vanish or undefined; use 0 < alpha* < 1")]
    LogSingularity(f64),

    #[error("non-finite value in {signal} at step {step}")]
    NonFinite { signal: &'static str, step: usize },

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("plot error: {0}")]
    Plot(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
