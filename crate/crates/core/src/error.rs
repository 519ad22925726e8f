use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("mode mismatch: field has {field} modes, grid supports {grid}")]
    ModeMismatch { field: usize, grid: usize },

    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("kernel time {t} outside (0, pi/4)")]
    KernelTimeOutOfRange { t: f64 },

    #[error("smoothing exponents require 1/r <= 1/s <= 1, got r={r}, s={s}")]
    ExponentMismatch { r: f64, s: f64 },

    #[error("quadrature nodes reach |x| = {reach:.3} but the cutoff transition needs {needed:.3}")]
    InsufficientGridSupport { reach: f64, needed: f64 },

    #[error("integration blow-up at step {step} (t = {t:.6}): {what}")]
    BlowUp { step: usize, t: f64, what: String },

    #[error("degenerate importance weights: effective sample size {ess:.2} < {min}")]
    DegenerateWeights { ess: f64, min: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}
