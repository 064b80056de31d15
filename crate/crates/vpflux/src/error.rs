//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VpError {
    /// Invalid configuration: bad grid parameters, unknown enumeration
    /// values, inconsistent settings.
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid geometry input, e.g. a self-intersecting polygon.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Numerical failure during a solve (NaN encountered, empty fluid
    /// region, degenerate fit input).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// I/O failure while reading configuration or writing artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
