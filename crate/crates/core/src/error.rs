use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0}: empty input")]
    Empty(&'static str),

    #[error("unknown head id {0}")]
    UnknownHead(usize),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("{what}: malformed at byte offset {offset}: {msg}")]
    Format {
        what: &'static str,
        offset: u64,
        msg: String,
    },

    #[error("rejection budget of {attempts} attempts exceeded for task {task} label {label}")]
    SamplingBudget {
        task: String,
        label: u8,
        attempts: usize,
    },

    #[error("insufficient data: need {needed}, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn format(what: &'static str, offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            what,
            offset,
            msg: msg.into(),
        }
    }
}
