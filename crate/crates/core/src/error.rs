use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("field length {got} does not match grid size {expected}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("field contains a non-finite value at index {0}")]
    NonFinite(usize),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("operation needs a torus axis but the configuration has m = 0")]
    NoTorusAxis,

    #[error("resample factor {0} is not representable on a power-of-two grid")]
    Factor(String),

    #[error("no projection exists: {0}")]
    Degenerate(&'static str),

    #[error("zero field")]
    ZeroField,

    #[error("inadmissible parameter: {0}")]
    Inadmissible(String),

    #[error("shooting failed: {0}")]
    Shooting(String),

    #[error("indicator does not change sign on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("radius {r} exceeds half the box half-length {half_length}")]
    RadiusTooLarge { r: f64, half_length: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("missing m_c for classification")]
    MissingMc,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("snapshot {path}: {msg}")]
    Snapshot { path: PathBuf, msg: String },

    #[error("{path}:{line}: {msg}")]
    Config { path: PathBuf, line: usize, msg: String },

    #[error("missing output {0}")]
    MissingOutput(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
