use std::path::PathBuf;

/// Errors produced by the capture pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("unsupported raster: {0}")]
    Unsupported(String),

    #[error("raster value out of range: {0}")]
    OutOfRange(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("need at least {required} images, found {found}")]
    TooFewImages { required: usize, found: usize },

    #[error("rank-deficient {0}")]
    RankDeficient(String),

    #[error("invalid light: {0}")]
    InvalidLight(String),

    #[error("invalid sphere annotation: {0}")]
    InvalidSphere(String),

    #[error("no specular highlight found inside the sphere disk")]
    NoHighlight,

    #[error("highlight centroid ({row:.2}, {col:.2}) lies outside the sphere disk")]
    HighlightOutsideDisk { row: f64, col: f64 },

    #[error("fewer than {required} usable pixels on the matte sphere (found {found})")]
    TooFewUsablePixels { required: usize, found: usize },

    #[error("estimated intensity is not positive ({0})")]
    NonPositiveIntensity(f64),

    #[error("image {index}: {source}")]
    AtImage {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("dome manifest: {0}")]
    Manifest(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("insufficient observations after trim: {0}")]
    InsufficientObservations(String),

    #[error("integration region is empty")]
    EmptyRegion,

    #[error("no valid pixels")]
    NoValidPixels,

    #[error(
        "solver did not converge after {iterations} iterations (relative residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn at_image(index: usize, err: Error) -> Self {
        Error::AtImage {
            index,
            source: Box::new(err),
        }
    }
}
