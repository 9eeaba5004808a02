use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate ray: input coincides with the anchor")]
    DegenerateRay,
    #[error("point is not strictly interior and cannot be inverted: {0}")]
    NotInvertible(String),
    #[error("infeasible constraint set: {0}")]
    InfeasibleSet(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("oracle did not converge: {0}")]
    NoConvergence(String),
    #[error("empty sample: {0}")]
    SkipSample(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn ensure_finite(name: &str, x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("{name} contains non-finite entries")))
    }
}
