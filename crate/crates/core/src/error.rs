use thiserror::Error;

/// Errors produced by the evaluation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index:?} out of bounds for dims {dims:?}")]
    OutOfBounds { index: [usize; 3], dims: [usize; 3] },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    Shape { left: [usize; 3], right: [usize; 3] },

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("unknown label code {code} (not present in the label schema)")]
    UnknownLabel { code: u8 },

    #[error("NIfTI format error in `{field}`: {reason}")]
    Format { field: &'static str, reason: String },

    #[error("empty mask: {0}")]
    EmptyMask(&'static str),

    #[error("topology consistency violated: {0}")]
    Topology(String),

    #[error("pairing error for case `{case_id}`: {reason}")]
    Pairing { case_id: String, reason: String },

    #[error("undefined result: {0}")]
    Undefined(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("phantom spec error: {0}")]
    Phantom(String),

    #[error("oracle scope exceeded: {0}")]
    OracleScope(String),

    #[error("ranking error: {0}")]
    Ranking(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
