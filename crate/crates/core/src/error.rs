use thiserror::Error;

use crate::solver::BlowupReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("radius {r} is not outside the horizon r = {horizon}")]
    Horizon { r: f64, horizon: f64 },

    #[error("inversion did not converge after {iterations} iterations (rstar = {rstar}, residual = {residual:e})")]
    NoConvergence {
        rstar: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("point (u = {u}, ub = {ub}) lies in the horizon-capped region")]
    Capped { u: f64, ub: f64 },

    #[error("degenerate null frame: eta = {0}")]
    DegenerateFrame(f64),

    #[error("solution blew up at (u = {}, ub = {})", .0.u, .0.ub)]
    Blowup(Box<BlowupReport>),

    #[error("inequality violated: right-hand side vanishes while left-hand side is {0:e}")]
    Violation(f64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
