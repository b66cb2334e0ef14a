//! Observer-based closed-loop glucose control with contraction certificates.
//!
//! The crate couples a four-state glucose-insulin plant and a two-compartment
//! meal model with an extended Luenberger observer and a proportional state
//! feedback law. Gains are certified by matrix-measure (logarithmic norm)
//! contraction margins over state boxes, and synthesized by a deterministic
//! margin-maximizing search. On top of that sit a fixed-step closed-loop
//! simulator, Monte Carlo scenario batches with parametric variability, and
//! the usual glycemic outcome metrics (time in range, LBGI/HBGI, CVGA).

pub mod cli;
pub mod contraction;
pub mod control;
pub mod metrics;
pub mod model;
pub mod scenarios;
pub mod sim;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("infeasible setpoint {g_sp} mg/dl (must be in (0, {max}])")]
    InfeasibleSetpoint { g_sp: f64, max: f64 },
    #[error("no candidate reached the required margin (best attained: {best_margin})")]
    Infeasible { best_margin: f64 },
    #[error("integration failed at t = {t} min: {reason}")]
    Integration { t: f64, reason: String },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
