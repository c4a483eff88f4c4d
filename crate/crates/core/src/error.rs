use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    /// Input did not match its declared file format.
    #[error("format error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Format { line: Option<u64>, message: String },

    #[error("missing column `{0}` in gazetteer header")]
    MissingColumn(String),

    #[error("empty gazetteer: no rows survived filtering")]
    EmptyGazetteer,

    #[error("empty vocabulary")]
    EmptyVocabulary,

    /// An argument violated the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown key {0}")]
    MissingKey(u64),

    #[error("embedding record {key}: {message}")]
    Embedding { key: u64, message: String },

    #[error("regressor is constant; slope undefined")]
    DegenerateRegressor,

    #[error("unknown country code `{0}`")]
    UnknownCountry(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn format(line: impl Into<Option<u64>>, message: impl Into<String>) -> Self {
        Error::Format {
            line: line.into(),
            message: message.into(),
        }
    }

    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }
}
