use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("CFL violation: dt * v_max / (eps * h) = {ratio:.6} exceeds {limit}")]
    Cfl { ratio: f64, limit: f64 },

    #[error("{constraint} stability violated: dt = {dt:e} exceeds {limit:e}")]
    Stability {
        constraint: &'static str,
        dt: f64,
        limit: f64,
    },

    #[error("clipped negative mass {clipped:e} exceeds {threshold:e} (relative to total); step too large")]
    ClipExceeded { clipped: f64, threshold: f64 },

    #[error("negative component {value:e} after step; dt too large")]
    NegativeState { value: f64 },

    #[error("right-hand side has velocity mean {mean:e}; it is outside the range of the reorientation operator")]
    NotZeroMean { mean: f64 },

    #[error("residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("at t = {t}: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_time(self, t: f64) -> Self {
        match self {
            e @ Error::AtTime { .. } => e,
            e => Error::AtTime {
                t,
                source: Box::new(e),
            },
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
