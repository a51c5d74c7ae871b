use std::path::PathBuf;

/// Errors raised anywhere in the annotation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("state error: {0}")]
    State(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("undefined accuracy: {0}")]
    UndefinedAccuracy(String),
    #[error("participant {participant}: {source}")]
    Participant {
        participant: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the participant it occurred for.
    pub fn for_participant(self, participant: &str) -> Self {
        Error::Participant {
            participant: participant.to_string(),
            source: Box::new(self),
        }
    }

    /// Strips participant context, returning the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Participant { source, .. } => source.root(),
            other => other,
        }
    }
}
