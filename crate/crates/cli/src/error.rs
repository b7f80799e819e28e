use std::io;
use std::path::PathBuf;

use thiserror::Error;
use tscom_core::bridge::BridgeError;
use tscom_core::codec::CodecError;
use tscom_core::container::ContainerError;
use tscom_core::metrics::MetricsError;
use tscom_core::predictors::PredictorError;
use tscom_core::serialize::SerializeError;
use tscom_core::synthetic::SyntheticError;

/// Process exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_VERIFY: u8 = 2;
pub const EXIT_PROTOCOL: u8 = 3;
pub const EXIT_INPUT: u8 = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {source}", path = path.display())]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}", path = path.display())]
    Write { path: PathBuf, source: io::Error },
    #[error("{path}:{row}:{column}: cannot parse {value:?} as a number", path = path.display())]
    Parse {
        path: PathBuf,
        row: u64,
        column: usize,
        value: String,
    },
    #[error("{path}:{row}: expected {expected} columns, found {found}", path = path.display())]
    Ragged {
        path: PathBuf,
        row: u64,
        expected: usize,
        found: usize,
    },
    #[error("{path}: {message}", path = path.display())]
    Csv { path: PathBuf, message: String },
    #[error("{path}: {source}", path = path.display())]
    Serialize {
        path: PathBuf,
        source: SerializeError,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Predictor(PredictorError),
    #[error(transparent)]
    Bridge(BridgeError),
    #[error(transparent)]
    Container(ContainerError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("verification failed: {0}")]
    Verify(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Verify(_) => EXIT_VERIFY,
            HarnessError::Container(ContainerError::CrcMismatch { .. }) => EXIT_VERIFY,
            HarnessError::Bridge(_) => EXIT_PROTOCOL,
            HarnessError::Write { .. } | HarnessError::Metrics(_) => EXIT_FAILURE,
            _ => EXIT_INPUT,
        }
    }
}

// Bridge failures surface through several layers; lift them out so they map to the
// protocol exit code wherever they happen.

impl From<BridgeError> for HarnessError {
    fn from(e: BridgeError) -> Self {
        HarnessError::Bridge(e)
    }
}

impl From<PredictorError> for HarnessError {
    fn from(e: PredictorError) -> Self {
        match e {
            PredictorError::Bridge(b) => HarnessError::Bridge(b),
            other => HarnessError::Predictor(other),
        }
    }
}

impl From<CodecError> for HarnessError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::Predictor(p) => p.into(),
            other => HarnessError::Container(ContainerError::Codec(other)),
        }
    }
}

impl From<ContainerError> for HarnessError {
    fn from(e: ContainerError) -> Self {
        match e {
            ContainerError::Predictor(p) => p.into(),
            ContainerError::Codec(c) => c.into(),
            other => HarnessError::Container(other),
        }
    }
}
