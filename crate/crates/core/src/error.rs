use thiserror::Error;

/// Errors raised anywhere in the simulation and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("Bessel order {order} exceeds the supported maximum {max}")]
    OrderOutOfRange { order: u32, max: u32 },

    #[error("analytic model requires omega_ac = pi/tau (got omega_ac*tau = {product:.9})")]
    OffResonance { product: f64 },

    #[error("pulse-error model gives P0 = {value} outside [0, 1]")]
    InvalidErrorModel { value: f64 },

    #[error("tau = {tau:e} s lies on a singularity of the lock-in filter")]
    Singularity { tau: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("integration failed at t = {time:e} s: {reason}")]
    Integration { time: f64, reason: String },

    #[error("count model produced a negative mean {mean} at sample {index}")]
    NegativeMean { index: usize, mean: f64 },

    #[error("degenerate photoluminescence contrast (i0 = i1 = {0})")]
    DegenerateContrast(f64),

    #[error("ill-posed fit: {0}")]
    IllPosed(String),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
