use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value {value} outside admissible range {range}")]
    OutOfRange { value: f64, range: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("CFL condition violated: dt = {dt:e} exceeds dx/max(|v|, 1) = {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("integration failed after {steps} steps: {reason}")]
    Integration { steps: usize, reason: String },

    #[error("bracketing failed: {0}")]
    Bracket(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn out_of_range(value: f64, range: impl Into<String>) -> Self {
        Error::OutOfRange {
            value,
            range: range.into(),
        }
    }

    /// Numerical failures (as opposed to usage or IO errors).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::Cfl { .. }
                | Error::Integration { .. }
                | Error::Bracket(_)
                | Error::Degenerate(_)
        )
    }
}
