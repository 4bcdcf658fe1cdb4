use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the probing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid label {label} at row {row} (n_classes = {n_classes})")]
    InvalidLabel {
        row: usize,
        label: usize,
        n_classes: usize,
    },

    #[error("network is frozen; parameters cannot be modified")]
    Frozen,

    #[error("network must be frozen before it can be probed")]
    NotFrozen,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "cannot bracket target accuracy {target}: accuracy {accuracy_low_sigma} at sigma {low_sigma}, \
         {accuracy_high_sigma} at sigma {high_sigma}"
    )]
    Unbracketable {
        target: f64,
        low_sigma: f64,
        accuracy_low_sigma: f64,
        high_sigma: f64,
        accuracy_high_sigma: f64,
    },

    #[error("bad magic number in {what}: expected {expected:#010x}, found {found:#010x}")]
    IdxMagic {
        what: &'static str,
        expected: u32,
        found: u32,
    },

    #[error("truncated {what}: expected {expected} bytes, found {actual}")]
    Truncated {
        what: &'static str,
        expected: u64,
        actual: u64,
    },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("not an activation dump: bad magic {found:?}")]
    NactMagic { found: [u8; 4] },

    #[error("unsupported activation dump version {found} (expected {expected})")]
    NactVersion { found: u32, expected: u32 },

    #[error("activation dump length inconsistent with header: expected {expected} bytes, found {actual}")]
    NactLength { expected: u64, actual: u64 },

    #[error("simplex iteration cap of {cap} exceeded")]
    IterationCap { cap: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("response is constant; logistic model is not identifiable")]
    NonIdentifiable,

    #[error("empty sample")]
    EmptySample,

    #[error("{0}")]
    Stage(String),

    #[error("i/o error on {path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn at_path(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Error::Path { path, source }
    }
}
