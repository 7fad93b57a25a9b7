use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The integrator drifted off the physical state space; usually the step
    /// is too large for the fastest frequency in the problem.
    #[error("integration did not converge at t = {time} us: {reason} (reduce the time step)")]
    NonConvergence { time: f64, reason: String },

    #[error("sample time {time} us lies outside the sequence span [0, {span}] us")]
    InvalidWindow { time: f64, span: f64 },

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),

    #[error("invalid pulse geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid ensemble specification: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no oscillation detected in the data")]
    NoOscillation,

    #[error("fit did not converge after {iterations} iterations")]
    FitNonConvergence { iterations: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}
