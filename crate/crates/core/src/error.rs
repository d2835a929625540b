use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("structure contains no atoms")]
    EmptyStructure,

    #[error("ligand residue `{0}` not found")]
    LigandNotFound(String),

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("unknown SMILES token `{token}` at position {position}")]
    UnknownToken { token: String, position: usize },

    #[error("unsupported SMILES construct: {0}")]
    UnsupportedSmiles(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("{0}")]
    Data(String),

    #[error("format: {0}")]
    Format(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Short class name: `usage`, `data` or `numeric`.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "usage",
            Error::DivisionByZero(_) | Error::Numeric(_) | Error::Undefined(_) | Error::Internal(_) => "numeric",
            _ => "data",
        }
    }

    /// Process exit code for this error class: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "usage" => 1,
            "data" => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
