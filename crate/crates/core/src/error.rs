use thiserror::Error;

/// Errors raised by the numerical core and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("blowup error: value {value:e} exceeded the overflow guard at t = {time}")]
    Blowup { value: f64, time: f64 },
    #[error(
        "degenerate profile: third derivative at the origin is {0}, modulation system is ill-posed"
    )]
    DegenerateProfile(f64),
    #[error("pin failure: Newton re-pin did not converge in {0} iterations")]
    PinFailure(usize),
    #[error("modulation rates are stale: computed at s = {rates_s}, field at s = {field_s}")]
    ModulationStale { rates_s: f64, field_s: f64 },
    #[error("trajectory left the grid at s = {s} (position {position})")]
    OutOfDomain { s: f64, position: f64 },
    #[error("insufficient decade: {0}")]
    InsufficientDecade(String),
    #[error("fit window unresolved: {0}")]
    WindowUnresolved(String),
    #[error("third-derivative trace is not Cauchy: spread {spread:e} over the last unit of s exceeds {tolerance:e}")]
    NonCauchy { spread: f64, tolerance: f64 },
    #[error("infeasible initial data: {0}")]
    Infeasible(String),
    #[error("unresolved region: {0}")]
    UnresolvedRegion(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {reason}")]
    Stage { stage: String, reason: String },
    #[error("input format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
