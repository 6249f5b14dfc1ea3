//! Error type shared by all modules.

/// Errors produced by preparation, fitting, transformation and file I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value or shape does not satisfy an operation's contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Not enough samples to carry out the computation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// An iterative routine exhausted its iteration budget.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// A file does not follow one of the documented on-disk layouts.
    #[error("format error: {0}")]
    Format(String),

    /// A file parsed structurally but its contents violate a model invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// The requested operation is not defined for this configuration.
    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    /// The data is degenerate for the requested analysis (e.g. zero energy).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
