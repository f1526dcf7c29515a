//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} index {index} out of range (len {len})")]
    OutOfBounds {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("energy {energy} keV outside table range [{min}, {max}] keV for {material}")]
    EnergyRange {
        material: String,
        energy: f64,
        min: f64,
        max: f64,
    },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("ray does not intersect the grid (zero length)")]
    EmptyRay,

    #[error("parse error in {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("operation requires {required} geometry, got {got}")]
    UnsupportedMode {
        required: &'static str,
        got: &'static str,
    },

    #[error("ray mask selects no rays")]
    EmptyMask,

    #[error("empty batch")]
    EmptyBatch,

    #[error("training diverged at step {step}: loss is not finite")]
    Training { step: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration problems,
    /// 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::Io(_) => 2,
            _ => 3,
        }
    }
}
