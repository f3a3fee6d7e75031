use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cube leaves the time-extended domain: {0}")]
    OutOfDomain(String),

    #[error("cannot refine a cube at level {level}: grid resolution is {grid_level}")]
    RefinementBelowGrid { level: u32, grid_level: u32 },

    #[error("negative input value at cell {cell}; decomposition requires f >= 0")]
    NegativeInput { cell: usize },

    #[error("invalid exponent p = {0}: p must be > 1")]
    InvalidExponent(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("instance too large for enumeration: {0}")]
    InstanceTooLarge(String),

    #[error("format error in field `{field}`: {message}")]
    Format { field: String, message: String },

    #[error("fixed-point magnitude overflow: {0}")]
    Overflow(String),

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
