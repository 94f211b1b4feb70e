use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),

    #[error("input row {row}, column {column}: {message}")]
    Ingestion { row: usize, column: String, message: String },

    #[error("input has {found} areas, at least {needed} are required")]
    Size { found: usize, needed: usize },

    #[error(transparent)]
    Core(#[from] retel_core::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Ingestion { .. } | Self::Size { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
