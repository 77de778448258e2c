//! Error type shared across the library.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A point fell outside the grid bounding box. `subject` names what was
    /// being located (a bare point, or the owning trajectory id).
    #[error("{subject}: coordinate {axis} = {value} outside domain [{min}, {max}]")]
    OutOfDomain {
        subject: String,
        axis: char,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("malformed trajectory {id}: {reason}")]
    MalformedTrajectory { id: String, reason: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("underdetermined system: no segment constraints")]
    NoConstraints,

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("internal consistency: {0}")]
    Inconsistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
