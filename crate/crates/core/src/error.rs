use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("covariance not positive definite ({0})")]
    CovarianceNotPositiveDefinite(String),
    #[error("unknown path shape {0:?}")]
    UnknownShape(String),
    #[error("time {t} s outside path duration [0, {duration}] s")]
    TimeOutOfRange { t: f64, duration: f64 },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("model degenerate: no cube passed the modelling gate")]
    ModelDegenerate,
    #[error("radial direction undefined for a position at the origin")]
    UndefinedDirection,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("weights: tensor {tensor:?}: {message}")]
    Weights { tensor: String, message: String },
    #[error("window has {got} observations, model expects {expected}")]
    WindowLength { expected: usize, got: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
