use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular KKT system (try a larger ridge than {ridge:e})")]
    SingularKkt { ridge: f64 },

    #[error("scenario program infeasible: {0}")]
    InfeasibleScenario(String),

    #[error("no candidate satisfies the constraint: {0}")]
    Infeasible(String),

    #[error("four-moment spec is not realizable: {0}")]
    MomentSpec(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(x: f64, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} is not finite ({x})")))
    }
}
