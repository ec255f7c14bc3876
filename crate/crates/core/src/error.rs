//! Error type shared across the toolkit.

use thiserror::Error;

/// Errors produced by the signal-processing and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid audio buffer: {0}")]
    InvalidAudio(String),

    #[error("signal too short: {len} samples, need at least {min}")]
    SignalTooShort { len: usize, min: usize },

    #[error("window (K={k}, R={r}) does not satisfy COLA for square-root Hann")]
    NotCola { k: usize, r: usize },

    #[error("invalid window spec: {0}")]
    InvalidWindow(String),

    #[error("modulation frequency {alpha} outside [0, 2*pi)")]
    InvalidModulation { alpha: f64 },

    #[error("frame count mismatch: {left} vs {right}")]
    FrameCountMismatch { left: usize, right: usize },

    #[error("empty frame range")]
    EmptyFrameRange,

    #[error("fundamental frequency must be positive, got {alpha1}")]
    NonPositiveFundamental { alpha1: f64 },

    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is numerically singular: {0}")]
    SingularMatrix(String),

    #[error("matrix not positive definite at bin {bin}")]
    IndefiniteAtBin { bin: usize },

    #[error("degenerate search grid: lo {lo} >= hi {hi}")]
    DegenerateGrid { lo: f64, hi: f64 },

    #[error("cutoff frequency {fc} Hz outside (0, {nyquist}) Hz")]
    InvalidCutoff { fc: f64, nyquist: f64 },

    #[error("reference signal has zero energy")]
    ZeroReference,

    #[error("target signal has zero energy")]
    ZeroTarget,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("config parse error at {path}:{line}: {msg}")]
    ConfigParse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("malformed CSV: {0}")]
    MalformedCsv(String),

    #[error("no results to process")]
    EmptyResults,

    #[error("RIR file error: {0}")]
    RirFile(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("WAV error: {0}")]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
