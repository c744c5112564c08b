use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("series order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },

    #[error("division by a non-invertible element (|constant term| = {magnitude:e})")]
    NonInvertible { magnitude: f64 },

    #[error("square root branch error: constant term {value} is not positive")]
    Branch { value: f64 },

    #[error("shift by u^{shift}: coefficient {index} = {value:e} exceeds the cancellation tolerance")]
    ShiftResidual { shift: usize, index: usize, value: f64 },

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("invalid usage: {0}")]
    Usage(String),

    #[error("pole of the generating function (|denominator| = {magnitude:e})")]
    Pole { magnitude: f64 },

    #[error("truncation at order {order} captured mass {captured}; need {required} (try order {suggested})")]
    Truncation { order: usize, captured: f64, required: f64, suggested: usize },

    #[error("observation tau = {tau} has probability {prob:e} under the current parameter")]
    ImpossibleObservation { tau: u64, prob: f64 },

    #[error("observation tau = {tau} is below the run length k = {k}")]
    Support { tau: u64, k: u32 },

    #[error("scan window needs {states} states, cap is {cap}")]
    Capacity { states: usize, cap: usize },

    #[error("no convergence after {iterations} iterations (last step {last_delta:e})")]
    NonConvergence { iterations: usize, last_delta: f64, trace: Vec<f64> },

    #[error("observed information {0} is not positive")]
    DegenerateInformation(f64),
}

impl Error {
    /// True for errors caused by bad inputs rather than numerical failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::Usage(_) | Error::Support { .. } | Error::OrderMismatch { .. }
        )
    }
}
