use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid too coarse: n = {n}, need at least {min}")]
    GridTooCoarse { n: usize, min: usize },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("time derivative needs at least 3 samples, got {0}")]
    TooFewSamples(usize),

    #[error("solver diverged: non-finite values at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("invalid reference image: {0}")]
    InvalidReference(String),

    #[error("{}: not an RTKD file", .0.display())]
    NotRtkd(PathBuf),

    #[error("{}: corrupt RTKD file ({reason})", .path.display())]
    CorruptFile { path: PathBuf, reason: String },

    #[error("{}: unsupported RTKD dtype {dtype}", .path.display())]
    UnsupportedDtype { path: PathBuf, dtype: u8 },

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn mismatch(what: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            what,
            expected,
            got,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Strips any `Stage` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
