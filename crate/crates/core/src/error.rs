use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The Gram matrix of the estimated channel over the active APs is
    /// singular or too badly conditioned to invert.
    #[error("infeasible activation: Gram matrix condition number {condition:.3e}")]
    SingularGram { condition: f64 },

    /// No power allocation satisfies the QoS and power constraints.
    #[error("QoS infeasible: {0}")]
    QosInfeasible(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Parse(String),
}
