use thiserror::Error;

/// Errors produced by model evaluation, certificate construction and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {context} (subsystem {subsystem}, t = {t})")]
    NonFinite {
        context: &'static str,
        subsystem: usize,
        t: f64,
    },
    #[error("non-finite input to {0}")]
    NonFiniteInput(&'static str),
    #[error(
        "g_{subsystem} = {value} outside declared bounds [{g_min}, {g_max}] at t = {t}"
    )]
    GainBoundViolation {
        subsystem: usize,
        value: f64,
        g_min: f64,
        g_max: f64,
        t: f64,
    },
    #[error("dimension mismatch: expected {expected} for {what}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("phi1_prime is singular at z = 0")]
    SingularAtZero,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("infeasible gains: {0}")]
    Infeasible(String),
    #[error("state diverged at t = {t} (|state| exceeded {limit})")]
    Divergence { t: f64, limit: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
