use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("fold mismatch: {0}")]
    FoldMismatch(String),
    #[error("wrong model kind: {0}")]
    Kind(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: taskfx::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    /// 0 success, 1 config, 2 IO, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        use taskfx::Error as E;
        match self {
            CliError::Config(_) | CliError::FoldMismatch(_) | CliError::Kind(_) => 1,
            CliError::Io(_) => 2,
            CliError::Stage { source, .. } => {
                if source.is_numeric() {
                    return 3;
                }
                match source.root() {
                    E::Config(_) | E::Range(_) | E::Kind(_) => 1,
                    _ => 2,
                }
            }
        }
    }
}

/// Annotates core errors with the pipeline stage they came from.
pub trait StageExt<T> {
    fn stage(self, stage: impl Into<String>) -> CliResult<T>;
}

impl<T> StageExt<T> for taskfx::Result<T> {
    fn stage(self, stage: impl Into<String>) -> CliResult<T> {
        self.map_err(|source| CliError::Stage {
            stage: stage.into(),
            source,
        })
    }
}
