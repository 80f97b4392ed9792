//! Batch front end: reads a JSON run configuration, runs one analysis and
//! writes CSV/JSON tables.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

pub use config::{Format, RunConfig};
pub use error::{CliError, Result, EXIT_CONFIG, EXIT_DOMAIN, EXIT_OK, EXIT_RUNTIME};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Simulate,
    Optimize,
    Whatif,
    FitPrices,
}

/// Command-line replacements for configuration fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(format) = self.format {
            config.format = format;
        }
    }
}

/// Runs `command` and returns the files written.
pub fn execute(command: Command, config: &RunConfig) -> Result<Vec<PathBuf>> {
    match command {
        Command::Analyze => commands::cmd_analyze(config),
        Command::Simulate => commands::cmd_simulate(config),
        Command::Optimize => commands::cmd_optimize(config),
        Command::Whatif => commands::cmd_whatif(config),
        Command::FitPrices => commands::cmd_fit_prices(config),
    }
}
