use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures raised by a likelihood/generation backend.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    /// Network failure, timeout or 5xx. Safe to retry.
    #[error("transport failure for {request}: {message}")]
    Transport { request: String, message: String },
    /// The server understood the request and refused it (4xx).
    #[error("request {request} rejected (HTTP {status}): {message}")]
    Rejected { request: String, status: u16, message: String },
    /// The server answered with something that violates the wire protocol.
    #[error("malformed response for {request}: {message}")]
    Protocol { request: String, message: String },
    #[error("backend does not support {0}")]
    Unsupported(&'static str),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport { .. })
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("{what} = {value} is outside (0, 1]")]
    InvalidProbability { what: &'static str, value: f64 },
    #[error("invalid likelihood: {0}")]
    InvalidLikelihood(String),
    #[error("degenerate conditioning: P({given}) = 0")]
    DegenerateConditioning { given: String },
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown document id {0:?}")]
    UnknownDocument(String),
    #[error("point {instance_id}/{demo_id} has no correctness flag")]
    MissingCorrectness { instance_id: String, demo_id: String },
    #[error("scoring failed for {context}: {source}")]
    Scoring {
        context: String,
        #[source]
        source: BackendError,
    },
    #[error("generation failed for {context}: {source}")]
    Generation {
        context: String,
        #[source]
        source: BackendError,
    },
    #[error("template {name} is missing placeholder {{{placeholder}}}")]
    Template { name: String, placeholder: String },
}

impl Error {
    pub fn is_retryable(&self) -> bool {
        match self {
            Error::Scoring { source, .. } | Error::Generation { source, .. } => source.is_retryable(),
            _ => false,
        }
    }
}
