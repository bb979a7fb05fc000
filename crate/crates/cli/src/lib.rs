//! Library side of the `pe` command-line tool. Every subcommand is a plain
//! function returning a serializable report, so the binary only parses
//! arguments and prints.

pub mod commands;
pub mod config;

pub use commands::*;
pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("config field {field}: {message}")]
    Field { field: String, message: String },
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0} sweep check(s) failed")]
    ChecksFailed(usize),
    #[error(transparent)]
    Core(#[from] pe_core::PeError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool
/// when `None`.
pub fn with_workers<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError> {
    match workers {
        None => f(),
        Some(0) => Err(CliError::Usage("--workers must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(f),
    }
}
