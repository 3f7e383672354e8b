use std::path::PathBuf;

use thiserror::Error;

use crate::grid::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: Shape, right: Shape },

    #[error("field contains a non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("primal-dual solver stopped after {iters} iterations with residual {residual:.3e}")]
    MaxItersExceeded { iters: usize, residual: f64 },

    #[error("time step {dt} is not smaller than the current norm {norm}")]
    StepTooLarge { dt: f64, norm: f64 },

    #[error("input lies in the null space of the functional")]
    DegenerateInput,

    #[error("subgradient vanished (norm {norm:.3e}); iterate entered the null space")]
    ZeroSubgradient { norm: f64 },

    #[error("linear operator annihilated the iterate (norm {norm:.3e})")]
    ZeroImage { norm: f64 },

    #[error("affinity undefined for zero-norm argument")]
    ZeroNorm,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
