use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid advice: {0}")]
    InvalidAdvice(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("action has zero mixed probability")]
    ZeroProbabilityAction,
    #[error("advice annihilates policy")]
    AdviceAnnihilatesPolicy,
    #[error("divergent gradient")]
    DivergentGradient,
    #[error("non-finite loss value")]
    NonFiniteLoss,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("stored advice missing at step {0}")]
    MissingAdvice(usize),
    #[error("map error: {0}")]
    Map(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("snapshot error: {0}")]
    Snapshot(String),
    #[error("csv error: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
