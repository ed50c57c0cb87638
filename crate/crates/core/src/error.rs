use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid transition matrix: {0}")]
    InvalidChain(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("numerically degenerate: {0}")]
    Degenerate(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 2 for configuration and validation problems, 1 for
    /// failures at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Degenerate(_) | Error::Infeasible(_) => 1,
            _ => 2,
        }
    }
}
