use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown function {0}")]
    UnknownFunction(u32),
    #[error("invalid dimension {0}: must be at least 1")]
    InvalidDimension(usize),
    #[error("out of domain: coordinate {index} = {value} outside [{lo}, {hi}]")]
    OutOfDomain {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("unsupported dimension {0}: Sobol direction numbers cover at most 32")]
    UnsupportedDimension(usize),
    #[error("insufficient sample: {got} points, need at least {need}")]
    InsufficientSample { got: usize, need: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("incomplete run set: {0}")]
    IncompleteRunSet(String),
    #[error("no usable features")]
    NoUsableFeatures,
    #[error("undefined gap: vbs equals sbs ({0})")]
    UndefinedGap(f64),
    #[error("missing feature {0}")]
    MissingFeature(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("missing dependency: {0}")]
    MissingDependency(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
