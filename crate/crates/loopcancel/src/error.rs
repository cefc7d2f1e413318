//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("sample period mismatch: {0} vs {1}")]
    PeriodMismatch(f64, f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("algebraic loop: I - D_g D_h is singular")]
    WellPosedness,

    #[error("H-infinity norm is undefined for an unstable system (spectral radius {0})")]
    UnstableSystem(f64),

    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("state dimension {0} exceeds the configured cap {1}")]
    Capacity(usize, usize),

    #[error("synthesis infeasible up to gamma = {0}")]
    Infeasible(f64),

    #[error("structural failure: {0}")]
    Structural(String),

    #[error("simulation diverged (peak |u| = {0:.3e})")]
    Diverged(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
