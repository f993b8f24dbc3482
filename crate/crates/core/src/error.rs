use std::io;

use thiserror::Error;

/// Errors produced by the kolmo toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("grid incompatible with operation: {0}")]
    GridIncompatible(String),

    #[error("phase undefined at snapshot {index}: |a(1,0)| = {magnitude:e}")]
    DegeneratePhase { index: usize, magnitude: f64 },

    #[error("indicator function has ambiguous sign at snapshot {index}: {detail}")]
    IndicatorDegenerate { index: usize, detail: String },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("series too short: need more than {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("histogram bins do not match")]
    BinMismatch,

    #[error("horizon out of range: {0}")]
    HorizonOutOfRange(String),

    #[error("training data contains a single class")]
    SingleClass,

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unsupported version {found} in {what} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
