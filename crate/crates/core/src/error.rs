use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("corrupt dataset header: {0}")]
    CorruptHeader(String),

    #[error("sample `{id}`: {reason}")]
    SampleDimension { id: String, reason: String },

    #[error("truncated payload{}", match .id { Some(id) => format!(" in sample `{id}`"), None => String::new() })]
    Truncated { id: Option<String> },

    #[error("class {class} has {count} samples, at least {k} are needed for a {k}-fold split")]
    FoldInfeasible { class: String, count: usize, k: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("class {0} is absent from the training labels")]
    AbsentClass(usize),

    #[error("training diverged at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("goalkeeper direction missing for: {}", .ids.join(", "))]
    MissingGoalkeeper { ids: Vec<String> },

    #[error("config error: {0}")]
    Config(String),

    #[error("incomplete run directory: {0}")]
    IncompleteRun(String),

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::CorruptHeader(_)
            | Error::SampleDimension { .. }
            | Error::Truncated { .. }
            | Error::FoldInfeasible { .. }
            | Error::LabelOutOfRange { .. }
            | Error::AbsentClass(_)
            | Error::MissingGoalkeeper { .. }
            | Error::IncompleteRun(_) => 3,
            Error::Divergence { .. } => 4,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
