use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("streams do not share an overlapping time span")]
    NoOverlap,

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("numerical error at iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },

    #[error("no re-enactment policy for node {node} and anomaly {class}")]
    MissingPolicy { node: String, class: String },

    #[error("compound key already registered: {0}")]
    AlreadyRegistered(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
