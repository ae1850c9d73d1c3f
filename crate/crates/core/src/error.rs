use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by model construction, analysis, and integration.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("population argument must be nonnegative, got x = {x}")]
    NegativeInput { x: f64 },

    #[error("invalid model parameters: {reason}")]
    InvalidParameters { reason: String },

    #[error("interval is empty: lo = {lo} exceeds hi = {hi}")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("no positive equilibrium exists for this model")]
    NoEquilibrium,

    #[error("several positive fixed points detected near {near:?}; single-equilibrium assumption violated")]
    AmbiguousEquilibrium { near: Vec<f64> },

    #[error(
        "Schwarzian derivative is singular at x = {x}: |f'(x)| = {slope:e} is below tolerance"
    )]
    SchwarzianSingular { x: f64, slope: f64 },

    #[error("invalid delay measure: {reason}")]
    InvalidMeasure { reason: String },

    #[error("invalid initial history: {reason}")]
    InvalidHistory { reason: String },

    #[error("history gap: queried t = {t} outside the available span [{span_lo}, {span_hi}]")]
    HistoryGap { t: f64, span_lo: f64, span_hi: f64 },

    #[error("step {step} exceeds min positive lag / 4 = {limit}; reduce the step or the lag")]
    StepTooLarge { step: f64, limit: f64 },

    #[error("invalid integration setup: {reason}")]
    InvalidRun { reason: String },

    #[error("solution became non-finite at t = {t} (last valid time {last_valid})")]
    Diverged { t: f64, last_valid: f64 },

    #[error("solution lost positivity at t = {t}: x = {x}")]
    PositivityLost { t: f64, x: f64 },

    #[error("tail window too short: {reason}")]
    TailWindow { reason: String },

    #[error("attracting-interval targets are infeasible: {reason}")]
    InfeasibleTargets { reason: String },
}
