use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix is not a twist: entry ({row}, {col}) = {value}")]
    NotATwist { row: usize, col: usize, value: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("graph must have at least one drone")]
    Empty,
    #[error("drone index {index} out of range for {n} drones")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("edge ({0}, {1}) is a self loop")]
    SelfLoop(usize, usize),
    #[error("graph is not connected: drone {0} is unreachable from drone 0")]
    NotConnected(usize),
    #[error("visibility weight d[{index}] = {value} must be positive")]
    InvalidWeight { index: usize, value: f64 },
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("H = L + D_v is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisionError {
    #[error("feature depth {z} is below the minimum {z_min}")]
    DepthTooSmall { z: f64, z_min: f64 },
    #[error("feature vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("invalid feature set: {0}")]
    InvalidFeatures(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset inputs and outputs differ in length ({inputs} vs {outputs})")]
    LengthMismatch { inputs: usize, outputs: usize },
    #[error("noise std for channel {channel} must be positive, got {value}")]
    InvalidNoise { channel: usize, value: f64 },
    #[error("hyperparameters for channel {channel} must be positive and finite")]
    InvalidHyperParams { channel: usize },
    #[error("Cholesky factorization failed for channel {channel} even with jitter {jitter:e}")]
    Factorization { channel: usize, jitter: f64 },
    #[error("probability delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("cannot fuse an empty set of predictions")]
    Empty,
}

/// Top-level error for scenario construction, data generation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Vision(#[from] VisionError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("drone {drone}: expert region contains no trajectory samples")]
    EmptySector { drone: usize },
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
