use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on shapes, ranges or lengths was violated.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("optimization diverged at step {step}: loss = {loss}")]
    Optimization { step: usize, loss: f64 },

    #[error("training diverged at step {step}: loss = {loss}")]
    Training { step: usize, loss: f64 },

    #[error("model serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! domain {
    ($($arg:tt)*) => {
        $crate::error::Error::Domain(format!($($arg)*))
    };
}
pub(crate) use domain;
