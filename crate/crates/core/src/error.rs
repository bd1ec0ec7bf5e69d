//! Error type shared by all simulator modules.

/// Errors produced by the simulator library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A requested quantity falls outside the validity range of the model.
    #[error("out of model: {0}")]
    OutOfModel(String),
    /// A measurement estimator received data it cannot normalize.
    #[error("degenerate measurement: {0}")]
    DegenerateMeasurement(String),
    /// Input data cannot support the requested analysis.
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    /// A least-squares fit could not be performed.
    #[error("fit failed: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
