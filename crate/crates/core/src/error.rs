use std::path::PathBuf;

use thiserror::Error;

use crate::autodiff::TapeError;
use crate::controller::ControllerError;
use crate::hamiltonian::HamiltonianError;
use crate::quantum::QuantumError;
use crate::tensor::LinalgError;

/// Top-level error for training, evaluation and file handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const IO: i32 = 4;
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Controller(ControllerError::Width { .. } | ControllerError::ZeroWidth) => {
                exit::CONFIG
            }
            Error::Quantum(QuantumError::Layout(_)) => exit::CONFIG,
            Error::Hamiltonian(HamiltonianError::Parse { .. } | HamiltonianError::Unsupported(_)) => exit::CONFIG,
            Error::Io { .. } | Error::Format { .. } => exit::IO,
            _ => exit::NUMERICAL,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
