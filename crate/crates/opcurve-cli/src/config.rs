//! Configuration file handling and flag/file/environment merging.
//!
//! Settings resolve with precedence: command-line flag, then config file,
//! then environment (`OPCURVE_OUT_DIR` for the output directory), then
//! built-in default. The config file is flat TOML; unknown keys are
//! rejected so typos fail loudly.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use serde::Deserialize;

use crate::UsageError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "OPCURVE_OUT_DIR";

/// All settings a config file may carry. Every field is optional; commands
/// read the subset they use and validate values at dispatch.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub lambda: Option<f64>,
    pub epsilon: Option<f64>,
    pub metric: Option<String>,
    pub cutoff: Option<f64>,
    pub alpha: Option<f64>,
    pub x_eval: Option<Vec<f64>>,
    pub n0: Option<usize>,
    pub persistence: Option<usize>,
    pub h: Option<f64>,
    pub standard_gamma: Option<f64>,
    pub standard_eta: Option<f64>,
    pub standard_beta: Option<Vec<f64>>,
    pub standard_csv: Option<PathBuf>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub t: Option<usize>,
    pub change_index: Option<usize>,
    pub windows: Option<Vec<usize>>,
    pub detector: Option<String>,
    pub mode: Option<String>,
    pub target_pfa: Option<Vec<f64>>,
    pub out_dir: Option<PathBuf>,
}

impl FileConfig {
    /// Loads a config file, or returns the empty config when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow!(UsageError(format!("cannot read {}: {e}", path.display()))))?;
        toml::from_str(&text)
            .map_err(|e| anyhow!(UsageError(format!("{}: {e}", path.display()))))
    }
}

/// Flag value if present, else file value.
pub fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

/// Output directory: flag, file, `OPCURVE_OUT_DIR`, then the working directory.
pub fn resolve_out_dir(flag: Option<PathBuf>, file: Option<PathBuf>) -> PathBuf {
    flag.or(file)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Which comparison metric a command should build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricChoice {
    Pa,
    Pn,
}

impl MetricChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pa" => Ok(MetricChoice::Pa),
            "pn" => Ok(MetricChoice::Pn),
            other => Err(anyhow!(UsageError(format!(
                "metric must be \"pa\" or \"pn\", found {other:?}"
            )))),
        }
    }
}

/// Which detector a simulation command should run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorChoice {
    Slca,
    LcCusum,
}

impl DetectorChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "slca" => Ok(DetectorChoice::Slca),
            "lccusum" => Ok(DetectorChoice::LcCusum),
            other => Err(anyhow!(UsageError(format!(
                "detector must be \"slca\" or \"lccusum\", found {other:?}"
            )))),
        }
    }
}

/// Which performance trajectory a simulation should follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeChoice {
    Inadequate,
    Learning,
}

impl ModeChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "inadequate" => Ok(ModeChoice::Inadequate),
            "learning" => Ok(ModeChoice::Learning),
            other => Err(anyhow!(UsageError(format!(
                "mode must be \"inadequate\" or \"learning\", found {other:?}"
            )))),
        }
    }
}
