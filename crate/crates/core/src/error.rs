use thiserror::Error;

/// Error taxonomy shared across the pipeline. The CLI maps the first three
/// variants to distinct process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration: out-of-domain parameter, missing artifact, invalid
    /// range.
    #[error("configuration error: {0}")]
    Config(String),

    /// Collected data violates a structural contract (conflicting outputs,
    /// broken transition chains, digest mismatch).
    #[error("data integrity error: {0}")]
    DataIntegrity(String),

    /// Training or simulation produced non-finite or saturated numerics.
    #[error("numeric divergence: {0}")]
    NumericDivergence(String),

    /// The simulator was driven with invalid state or control.
    #[error("simulation fault: {0}")]
    SimulationFault(String),

    /// Tensor shape mismatch at construction time.
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(format!("bad config file: {e}"))
    }
}
