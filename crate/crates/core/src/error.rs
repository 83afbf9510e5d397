use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index {index} out of range for mode {mode} of size {dim}")]
    Bounds { mode: usize, index: usize, dim: usize },

    #[error("mode {mode} is invalid for a tensor of order {order}")]
    Mode { mode: usize, order: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("invalid problem: {field}: {message}")]
    Validation { field: String, message: String },

    #[error("duplicate coefficient entries: {0:?}")]
    DuplicateCoefficients(Vec<(usize, Vec<usize>)>),

    #[error("basis function {subfunction} ({name}) is undefined at input {input}")]
    Domain {
        subfunction: usize,
        name: String,
        input: f64,
    },

    #[error("server {server}: basis function {subfunction} ({name}) is undefined at input {input}")]
    ServerDomain {
        server: usize,
        subfunction: usize,
        name: String,
        input: f64,
    },

    #[error("{} support entries lie outside every tile (first: {:?})", .0.len(), .0.first())]
    Coverage(Vec<Vec<usize>>),

    #[error("tile {tile}: numerical rank {rank} exceeds rank budget {budget}")]
    Infeasible {
        tile: usize,
        rank: usize,
        budget: usize,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn validation(field: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
