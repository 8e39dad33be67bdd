use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] adhesion_core::Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    /// Process exit status: 2 for bad input, 3 for a broken invariant.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(adhesion_core::Error::Invariant(_)) | CliError::Invariant(_) => 3,
            _ => 2,
        }
    }
}
