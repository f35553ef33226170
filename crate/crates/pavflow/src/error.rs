use thiserror::Error;

/// Library-wide error type.
///
/// Variants split into two broad classes: input/validation problems
/// (bad parameters, malformed states, degenerate topologies) and
/// numerical failures (guard violations, lost positivity, stalled
/// solvers). Front ends map the classes to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("invalid state vector: {0}")]
    InvalidState(String),

    #[error("state has k={state_k} but params have k={params_k}")]
    DimensionMismatch { state_k: usize, params_k: usize },

    #[error(
        "step size {step_h} violates the stability guard: h * max rate = {product:.4} (limit 2.5)"
    )]
    StepSizeViolation { step_h: f64, product: f64 },

    #[error("component {index} went negative ({value:.3e}) at t={time}")]
    NegativeComponent { index: usize, value: f64, time: f64 },

    #[error("no convergence after {iterations} iterations (best residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("k={k} exceeds the dense-analysis cap ({cap}); use the matrix-free paths instead")]
    AnalysisCap { k: usize, cap: usize },

    #[error("alpha={alpha} exceeds the self-map cap {cap:.6}")]
    AlphaTooLarge { alpha: f64, cap: f64 },

    #[error(
        "operation requires a lock chain on both sides (t_lock_h={t_lock_h}, t_lock_a={t_lock_a})"
    )]
    DegenerateTopology { t_lock_h: f64, t_lock_a: f64 },

    #[error("speed must be positive, got {0}")]
    NonPositiveSpeed(f64),

    #[error("time {t} outside covered range [{start}, {end}]")]
    TimeOutOfRange { t: f64, start: f64, end: f64 },

    #[error("speed profile: {0}")]
    ProfileFormat(String),

    #[error("W1 threshold {threshold} not reachable with k <= {cap}")]
    ThresholdUnreachable { threshold: f64, cap: usize },

    #[error("Monte Carlo dt={dt} too coarse: per-step event probability {p:.3} exceeds 0.1")]
    DtTooCoarse { dt: f64, p: f64 },

    #[error("particle count {0} below the minimum of 1000")]
    TooFewParticles(usize),

    #[error("numerical failure: {0}")]
    Numerics(String),
}

impl Error {
    /// True for errors that indicate bad input rather than a numerical
    /// breakdown. Used by callers that distinguish exit codes.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParam { .. }
                | Error::InvalidState(_)
                | Error::DimensionMismatch { .. }
                | Error::StepSizeViolation { .. }
                | Error::AnalysisCap { .. }
                | Error::AlphaTooLarge { .. }
                | Error::DegenerateTopology { .. }
                | Error::NonPositiveSpeed(_)
                | Error::TimeOutOfRange { .. }
                | Error::ProfileFormat(_)
                | Error::DtTooCoarse { .. }
                | Error::TooFewParticles(_)
        )
    }
}
