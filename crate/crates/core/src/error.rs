use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus row {row}: {message}")]
    CorpusRow { row: usize, message: String },

    #[error("invalid form: {0}")]
    InvalidForm(String),

    #[error("tokenizer: {0}")]
    Tokenizer(String),

    #[error("model: {0}")]
    Model(String),

    #[error("missing or mis-shaped tensor `{name}`: {reason}")]
    Tensor { name: String, reason: String },

    #[error("trace dump: {0}")]
    TraceDump(String),

    #[error("alignment: {0}")]
    Align(String),

    #[error("metric: {0}")]
    Metric(String),

    #[error("{0}")]
    Pipeline(String),

    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("report: {0}")]
    Report(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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
}
