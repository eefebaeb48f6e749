use std::path::PathBuf;

/// Process exit status for a successful run.
pub const EXIT_OK: i32 = 0;
/// Bad input: flags, config, files, shapes.
pub const EXIT_VALIDATION: i32 = 1;
/// A numerical check (gradient check) exceeded its threshold.
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] errnet_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: byte {offset}: {message}", path.display())]
    Format { path: PathBuf, offset: usize, message: String },

    #[error("{}:{line}: {message}", path.display())]
    Config { path: PathBuf, line: usize, message: String },

    #[error("csv {}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("numerical check failed: {0}")]
    NumericalCheck(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::NumericalCheck(_) => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn csv(path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Csv { path, source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
