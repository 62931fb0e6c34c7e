//! Batch runner: reads JSON run configs, executes the matching experiment and
//! writes `summary.json` plus CSV artifacts under the output directory.

pub mod config;
pub mod experiments;
pub mod oracle;

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use config::{Experiment, RunConfig};
pub use experiments::{execute, Check, Outcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: invalid config: {source}")]
    Config { path: PathBuf, source: serde_json::Error },
    #[error("{name}: {source}")]
    Experiment { name: String, source: fraclab_core::Error },
    #[error("no *.json configs in {0}")]
    EmptySuite(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Contents of `summary.json`. No timings, so reruns are byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub name: String,
    pub kind: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub results: Value,
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Config {
        path: path.to_path_buf(),
        source,
    })
}

fn config_name(config: &RunConfig, path: Option<&Path>) -> String {
    config
        .name
        .clone()
        .or_else(|| path.and_then(|p| p.file_stem()).map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| config.experiment.kind().to_string())
}

/// Runs one config and writes its artifacts to `out_dir/<name>/`.
pub fn run_config(config: &RunConfig, name: &str, out_dir: &Path, seed: Option<u64>) -> Result<Summary, CliError> {
    let seed = seed.unwrap_or(config.seed);
    info!("running {name} ({}) with seed {seed}", config.experiment.kind());
    let outcome = execute(&config.experiment, seed).map_err(|source| CliError::Experiment {
        name: name.to_string(),
        source,
    })?;
    let summary = Summary {
        name: name.to_string(),
        kind: config.experiment.kind().to_string(),
        seed,
        passed: outcome.checks.iter().all(|c| c.passed),
        checks: outcome.checks,
        results: outcome.results,
    };
    let dir = out_dir.join(name);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (file, contents) in &outcome.files {
        let path = dir.join(file);
        fs::write(&path, contents).map_err(io_err(&path))?;
    }
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    for c in summary.checks.iter().filter(|c| !c.passed) {
        warn!("{name}: {} failed: {}", c.name, c.detail);
    }
    Ok(summary)
}

pub fn run_file(path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<Summary, CliError> {
    let config = load_config(path)?;
    run_config(&config, &config_name(&config, Some(path)), out_dir, seed)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub config: String,
    pub name: Option<String>,
    /// `None` when the run errored before producing checks.
    pub passed: Option<bool>,
    pub failed_checks: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub errored: usize,
    pub runs: Vec<SuiteEntry>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.total
    }
}

/// Runs every `*.json` in `dir` (sorted by file name) in parallel and writes
/// `out_dir/suite.json`.
pub fn run_suite(dir: &Path, out_dir: &Path, seed: Option<u64>) -> Result<SuiteReport, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::EmptySuite(dir.to_path_buf()));
    }
    let runs: Vec<SuiteEntry> = paths
        .par_iter()
        .map(|path| {
            let config = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            match run_file(path, out_dir, seed) {
                Ok(s) => SuiteEntry {
                    config,
                    name: Some(s.name),
                    passed: Some(s.passed),
                    failed_checks: s.checks.into_iter().filter(|c| !c.passed).map(|c| c.name).collect(),
                    error: None,
                },
                Err(e) => {
                    warn!("{e}");
                    SuiteEntry {
                        config,
                        name: None,
                        passed: None,
                        failed_checks: Vec::new(),
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let count = |want: Option<bool>| runs.iter().filter(|r| r.passed == want).count();
    let report = SuiteReport {
        total: runs.len(),
        passed: count(Some(true)),
        failed: count(Some(false)),
        errored: count(None),
        runs,
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let path = out_dir.join("suite.json");
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(report)
}
