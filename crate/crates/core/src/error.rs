use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Pitch too close to ±π/2, where the ZYX Euler-rate map is singular.
    #[error("euler-rate singularity: pitch {pitch} rad has |cos(pitch)| <= {guard}")]
    Singularity { pitch: f64, guard: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("horizon step {step} has no stance legs")]
    NoStanceLegs { step: usize },

    #[error("plan length {plan} does not match horizon {horizon}")]
    HorizonMismatch { plan: usize, horizon: usize },

    #[error("buffer index {index} out of range for {len} samples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("empty evaluation window: {0}")]
    EmptyWindow(String),

    #[error("config: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
