use thiserror::Error;

/// Errors produced anywhere in the discretization / optimization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("stability gate failed: {0}")]
    StabilityGate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("size guard: {0}")]
    SizeGuard(String),

    #[error("invalid control: {0}")]
    InvalidControl(String),

    #[error("grids are not nested: {0}")]
    NonNested(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
