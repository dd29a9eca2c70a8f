//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("group of size {size} exceeds cap {cap} for {fk}")]
    CapExceeded { fk: String, size: usize, cap: usize },
    #[error("incomplete row {row}: {detail}")]
    IncompleteRow { row: usize, detail: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("subset error: {0}")]
    Subset(String),
    #[error("no stored marginal for {0}")]
    MissingNpm(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("budget overdraw: charging {cost} on top of {spent} exceeds {budget}")]
    BudgetOverdraw { spent: f64, cost: f64, budget: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("junction tree needs {cells} cells, cap is {cap}")]
    WidthExceeded { cells: f64, cap: f64 },
    #[error("empty candidate pool: {0}")]
    EmptyCandidates(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {msg}")]
    Csv { path: String, msg: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::BudgetOverdraw { .. } => 4,
            Error::Schema(_)
            | Error::Integrity(_)
            | Error::Type(_)
            | Error::CapExceeded { .. }
            | Error::Io { .. }
            | Error::Csv { .. } => 3,
            _ => 1,
        }
    }
}
