use std::path::PathBuf;

use thiserror::Error;

use crate::model::{Dimension, ValidationError};
use crate::prompt::PromptError;
use crate::provider::ProviderError;
use crate::trace::TraceError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("attenuation base 1 - alpha*f is not positive (alpha={alpha}, f={freq})")]
    InvalidAttenuation { alpha: f64, freq: u32 },
    #[error("{dimension} step for `{unit}` produced no usable output after rectification: {reason}")]
    ExhaustedRectification { dimension: Dimension, unit: String, reason: PromptError },
    #[error("conflict resolution returned no revision for `{0}`")]
    MissingRevision(String),
    #[error("conflict report is empty")]
    EmptyConflict,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("target directory {} is not empty", .0.display())]
    NonEmptyTarget(PathBuf),
    #[error("project tree has no functions")]
    EmptyProject,
    #[error("no samples to aggregate")]
    EmptySampleSet,
    #[error("no file received a parseable judge score")]
    AllFilesUnscored,
    #[error("dataset line {line}: {message}")]
    DatasetParse { line: usize, message: String },
    #[error("dataset line {line}: {source}")]
    DatasetInvalid { line: usize, source: ValidationError },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
