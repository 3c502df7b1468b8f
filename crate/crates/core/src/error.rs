use thiserror::Error;

/// Invalid physical input: non-positive durations, out-of-range attenuation,
/// times outside the pulse window.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PulseError {
    #[error("{name} must be strictly positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("time {t} lies outside the pulse window [0, {duration}]")]
    OutOfDomain { t: f64, duration: f64 },
    #[error("total duration {total} is shorter than two edges of {edge} each")]
    DurationTooShort { total: f64, edge: f64 },
    #[error("component count must be at least 1, got {0}")]
    NoComponents(usize),
    #[error("attenuation must lie in (0, 1], got {0}")]
    Attenuation(f64),
    #[error("window shift {shift} collapses the window width {span}")]
    WindowCollapsed { shift: f64, span: f64 },
    #[error("expected {expected} tone phases, got {got}")]
    PhaseCount { expected: usize, got: usize },
    #[error("rabi error fraction must exceed -1, got {0}")]
    RabiError(f64),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("norm drift {drift:e} exceeds the allowed {limit:e}")]
    NormDrift { drift: f64, limit: f64 },
    #[error("invalid solver options: {0}")]
    Options(String),
    #[error("quadrature did not converge on [{a}, {b}] (error estimate {estimate:e})")]
    Quadrature { a: f64, b: f64, estimate: f64 },
    #[error(transparent)]
    Pulse(#[from] PulseError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("{0}")]
    Grid(String),
    #[error("no suture crossing after the edge: {0}")]
    NoCrossing(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
}
