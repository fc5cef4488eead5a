use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },
    #[error("invalid metadata: {0}")]
    Metadata(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("matrix has no data rows")]
    EmptyMatrix,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFiniteData(String),
    #[error("time window error: {0}")]
    Window(String),
    #[error("z-score fit requires at least one row")]
    EmptyFit,
    #[error("zero-norm vector: {0}")]
    ZeroVector(String),
    #[error("unknown entity `{0}`")]
    MissingEntity(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("optimizer diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("hyperparameter search failed: every candidate diverged")]
    SearchFailed,
    #[error("distance undefined: {0}")]
    DistanceUndefined(String),
    #[error("no admissible test pairs for filter {0}")]
    NoPairs(String),
    #[error("degenerate test: {0}")]
    DegenerateTest(String),
    #[error("wrong model kind: {0}")]
    Kind(String),
    #[error("fold {fold}: {source}")]
    InFold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Strips fold annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::InFold { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for failures of the numerical routines rather than of inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self.root(),
            Error::SingularSystem(_)
                | Error::Diverged { .. }
                | Error::SearchFailed
                | Error::NonFiniteData(_)
                | Error::DegenerateTest(_)
                | Error::ZeroVector(_)
                | Error::DistanceUndefined(_)
                | Error::NoPairs(_)
        )
    }
}
