use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("mesh parse error at line {line}: {msg}")]
    MeshParse { line: usize, msg: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("unknown boundary tag `{0}`")]
    UnknownTag(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error("time integration aborted at t = {t}: {msg}")]
    Integration { t: f64, msg: String },

    #[error("point ({x}, {y}) lies outside the mesh")]
    PointOutsideMesh { x: f64, y: f64 },

    #[error("insufficient history: need {need} levels, have {have}")]
    InsufficientHistory { need: usize, have: usize },

    #[error("repeated abscissa {0} in divided difference")]
    RepeatedTime(f64),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
