use thiserror::Error;

use crate::models::FlowState;

pub type Result<T> = std::result::Result<T, FlowError>;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("ill-conditioned matrix: smallest eigenvalue {min:e} vs largest {max:e}")]
    Conditioning { min: f64, max: f64 },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("gauge error: {0}")]
    Gauge(String),
    /// Constraint or step-size failure. Carries the last accepted state.
    #[error("evolution failed at t = {t}: {reason}")]
    Evolution { t: f64, reason: String, last: Box<FlowState> },
    #[error("gowdy evolution failed at R = {r}: {reason}")]
    GowdyEvolution { r: f64, reason: String },
    #[error("CFL violation: dR = {dr} exceeds {limit}")]
    Cfl { dr: f64, limit: f64 },
    #[error("requested window [{lo}, {hi}] outside trajectory span [{t0}, {t1}]")]
    Span { lo: f64, hi: f64, t0: f64, t1: f64 },
    #[error("trajectory too short: {0}")]
    ShortSpan(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("insufficient blowup: {0}")]
    InsufficientBlowup(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// Scenario file content that does not validate.
    #[error("schema error: {0}")]
    Schema(String),
}
