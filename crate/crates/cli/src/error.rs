use std::path::PathBuf;

use lattice_fusion::decoder::DecodeError;
use lattice_fusion::lattice::LatticeError;
use lattice_fusion::ngram::{ArpaError, NGramError};
use lattice_fusion::scorer::ScoreError;
use thiserror::Error;

pub const EXIT_PARSE: i32 = 3;
pub const EXIT_COVERAGE: i32 = 4;
pub const EXIT_DIMENSION: i32 = 5;
pub const EXIT_IO: i32 = 6;
pub const EXIT_OTHER: i32 = 7;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {message}")]
    Parse { context: String, message: String },
    #[error("{context}: {message}")]
    Coverage { context: String, message: String },
    #[error("{context}: {message}")]
    Dimension { context: String, message: String },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } => EXIT_PARSE,
            CliError::Coverage { .. } => EXIT_COVERAGE,
            CliError::Dimension { .. } => EXIT_DIMENSION,
            CliError::Io { .. } => EXIT_IO,
            CliError::Other(_) => EXIT_OTHER,
        }
    }

    pub fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        CliError::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn from_lattice(context: impl Into<String>, e: LatticeError) -> Self {
        let context = context.into();
        let message = e.to_string();
        match e {
            LatticeError::Uncovered { .. } | LatticeError::EmptyInput => {
                CliError::Coverage { context, message }
            }
            LatticeError::EmptyVocabulary
            | LatticeError::InvalidWord { .. }
            | LatticeError::ByteOrderMark => CliError::Parse { context, message },
        }
    }

    pub fn from_decode(context: impl Into<String>, e: DecodeError) -> Self {
        let context = context.into();
        let message = e.to_string();
        match e {
            DecodeError::Dimension(_) => CliError::Dimension { context, message },
            DecodeError::Parse { .. } | DecodeError::EmptyReference => {
                CliError::Parse { context, message }
            }
            DecodeError::NoHypothesis | DecodeError::EmptyNBest => {
                CliError::Other(format!("{context}: {message}"))
            }
        }
    }

    pub fn from_score(context: impl Into<String>, e: ScoreError) -> Self {
        match e {
            ScoreError::Lattice(e) => CliError::from_lattice(context, e),
            other => CliError::Other(format!("{}: {other}", context.into())),
        }
    }
}

impl From<ArpaError> for CliError {
    fn from(e: ArpaError) -> Self {
        CliError::parse("language model", e)
    }
}

impl From<NGramError> for CliError {
    fn from(e: NGramError) -> Self {
        CliError::Other(e.to_string())
    }
}
