//! Result files. Every file carries the seed and the resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::error::{CliError, Result};

pub struct Writer {
    dir: PathBuf,
    format: Format,
    seed: u64,
    config: serde_json::Value,
    written: Vec<PathBuf>,
}

fn output_err(path: &Path, e: impl ToString) -> CliError {
    CliError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

impl Writer {
    pub fn new(config: &RunConfig) -> Result<Self> {
        fs::create_dir_all(&config.output_dir).map_err(|e| output_err(&config.output_dir, e))?;
        let value = serde_json::to_value(config).map_err(|e| output_err(&config.output_dir, e))?;
        Ok(Self {
            dir: config.output_dir.clone(),
            format: config.format,
            seed: config.seed,
            config: value,
            written: Vec::new(),
        })
    }

    /// Writes `<name>.csv` when CSV output is enabled. The table follows two
    /// `#` lines holding the seed and the configuration as JSON.
    pub fn table<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        if !self.format.csv() {
            return Ok(());
        }
        let path = self.dir.join(format!("{name}.csv"));
        let mut buf = format!("# seed={}\n# config={}\n", self.seed, self.config).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            for row in rows {
                w.serialize(row).map_err(|e| output_err(&path, e))?;
            }
            w.flush().map_err(|e| output_err(&path, e))?;
        }
        fs::write(&path, buf).map_err(|e| output_err(&path, e))?;
        log::info!("wrote {}", path.display());
        self.written.push(path);
        Ok(())
    }

    /// Writes `<name>.json` when JSON output is enabled.
    pub fn document<T: Serialize>(&mut self, name: &str, command: &str, result: &T) -> Result<()> {
        if !self.format.json() {
            return Ok(());
        }
        let path = self.dir.join(format!("{name}.json"));
        let doc = serde_json::json!({
            "command": command,
            "seed": self.seed,
            "config": self.config,
            "result": result,
        });
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| output_err(&path, e))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| output_err(&path, e))?;
        log::info!("wrote {}", path.display());
        self.written.push(path);
        Ok(())
    }

    pub fn finish(self) -> Vec<PathBuf> {
        self.written
    }
}

/// Splits a CSV written by [`Writer::table`] into its embedded configuration
/// and the table body.
pub fn read_embedded(text: &str) -> Option<(u64, RunConfig, String)> {
    let mut seed = None;
    let mut config = None;
    let mut body = String::new();
    for line in text.lines() {
        if let Some(s) = line.strip_prefix("# seed=") {
            seed = s.trim().parse().ok();
        } else if let Some(c) = line.strip_prefix("# config=") {
            config = serde_json::from_str(c).ok();
        } else if !line.starts_with('#') {
            body.push_str(line);
            body.push('\n');
        }
    }
    Some((seed?, config?, body))
}
