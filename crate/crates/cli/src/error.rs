use thiserror::Error;

/// Failure of a subcommand. Each variant maps to a fixed process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or invalid configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Every requested point lies outside the model's domain.
    #[error("infeasible: {0}")]
    Domain(String),

    #[error(transparent)]
    Model(#[from] evcap_core::Error),

    #[error(transparent)]
    Sim(#[from] evcap_sim::Error),

    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Domain(_) => EXIT_DOMAIN,
            CliError::Model(e) if e.is_domain() => EXIT_DOMAIN,
            CliError::Model(_) => EXIT_CONFIG,
            CliError::Sim(e) if e.is_runtime() => EXIT_RUNTIME,
            CliError::Sim(e) if e.is_domain() => EXIT_DOMAIN,
            CliError::Sim(_) => EXIT_CONFIG,
            CliError::Output { .. } => EXIT_RUNTIME,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
