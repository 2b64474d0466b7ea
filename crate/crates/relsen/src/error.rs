use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("topology: {0}")]
    Topology(String),

    #[error("config: {0}")]
    Config(String),

    #[error("calibration: {0}")]
    Calibration(String),

    /// Malformed or out-of-order stream data.
    #[error("stream: {0}")]
    Stream(String),

    /// A process ended up with zero total weight in the cleaning step.
    #[error("estimation: {0}")]
    Estimation(String),

    #[error("insufficient history: have {have} entries, need {need}")]
    InsufficientHistory { have: usize, need: usize },

    #[error("local fit: {0}")]
    Fit(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("fault injection: {0}")]
    Injection(String),

    #[error("evaluation: {0}")]
    Eval(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
