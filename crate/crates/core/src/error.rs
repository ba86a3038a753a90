use std::path::PathBuf;

use thiserror::Error;

use crate::training::TrainReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("inconsistent input: {0}")]
    Consistency(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("stabilizer too small: {0}")]
    Stabilizer(String),

    #[error("construction error: {0}")]
    Construction(String),

    #[error("non-finite gradient at epoch {epoch}, batch {batch} (loss {loss})")]
    NonFiniteGradient { epoch: usize, batch: usize, loss: f64 },

    #[error("training diverged at epoch {epoch}, batch {batch} (loss {loss})")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
        report: Box<TrainReport>,
    },

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Validation(_) => 2,
            Error::NonFiniteGradient { .. }
            | Error::Diverged { .. }
            | Error::Stabilizer(_)
            | Error::RankDeficient(_) => 3,
            Error::Io { .. } | Error::Csv(_) => 4,
            Error::Format(_)
            | Error::Consistency(_)
            | Error::Parse { .. }
            | Error::EmptyDataset(_)
            | Error::Stratification(_)
            | Error::Shape(_)
            | Error::Construction(_)
            | Error::Json(_) => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
