use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate detuning: δ_h + δ_e = 0")]
    DegenerateDetuning,

    #[error("jump time not located to within {tolerance:e} ns at t = {time} ns")]
    NonConvergence { time: f64, tolerance: f64 },

    #[error("slot {slot} out of range for {n_slots} photon slots")]
    SlotOutOfRange { slot: usize, n_slots: usize },

    #[error("slot {slot} still carries Rayleigh amplitude {amplitude:e}")]
    SlotUnscattered { slot: usize, amplitude: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("sample budget {got} below the minimum of {min}")]
    SampleBudgetTooSmall { got: usize, min: usize },

    #[error("coherence envelope never drops below 1/e on the supplied grid")]
    NoCrossing,

    #[error("{required} outcome evaluations exceed the budget of {budget}")]
    BudgetExceeded { required: f64, budget: f64 },

    #[error("invalid cluster size: n = {n} with L = {l}")]
    InvalidSize { l: usize, n: usize },

    #[error("measurement axes are not informationally complete")]
    NotInformationallyComplete,

    #[error("optimizer still improving by {improvement:e} after reported convergence")]
    OptimizerStall { improvement: f64 },

    #[error("not implemented: {0}")]
    NotImplemented(&'static str),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::SlotOutOfRange { .. }
                | Error::DimensionMismatch { .. }
                | Error::SampleBudgetTooSmall { .. }
                | Error::BudgetExceeded { .. }
                | Error::InvalidSize { .. }
                | Error::DegenerateDetuning
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
