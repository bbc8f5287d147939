use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A quantity that is only defined as a limit (flat prior) diverges.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("cutoff {cutoff} too small: truncated weight {truncated_weight:.3e} exceeds {tolerance:.1e}")]
    CutoffTooSmall {
        cutoff: usize,
        truncated_weight: f64,
        tolerance: f64,
    },

    #[error("no convergence: value {value} with error estimate {error:.3e} above bound {bound:.1e}")]
    Convergence { value: f64, error: f64, bound: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("malformed CSV at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("gain estimation failed: {0}")]
    Estimation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn ensure_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} has non-finite entries")))
    }
}
