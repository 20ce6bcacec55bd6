use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix shapes do not fit the requested operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A parameter lies outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A Kraus set violates the trace-preservation condition.
    #[error("validation error: sum of T^dag T deviates from identity by {deviation:.3e} (tolerance {tolerance:.1e})")]
    Validation { deviation: f64, tolerance: f64 },

    /// Plan steps use decompositions of different channels.
    #[error("validation error: {0}")]
    ChannelMismatch(String),

    /// A computation would exceed a resource guard.
    #[error("resource guard: {0}")]
    Resource(String),

    /// A channel-spec file could not be parsed.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
