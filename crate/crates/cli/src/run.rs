use std::path::{Path, PathBuf};

use cfpo_core::trainer::{train, RunArtifact, RunSummary};

use crate::config::RunConfigFile;
use crate::error::{CliError, Result};

/// Resolved config stored beside the artifacts; resume compares against it.
pub const CONFIG_FILE: &str = "config.toml";

pub fn run_dir(root: &Path, cfg: &RunConfigFile) -> PathBuf {
    root.join(&cfg.run_name)
}

/// Trains `cfg` and writes its artifacts into `dir`.
pub fn execute(cfg: &RunConfigFile, dir: &Path) -> Result<RunSummary> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let config_path = dir.join(CONFIG_FILE);
    std::fs::write(&config_path, cfg.to_toml_string()?)
        .map_err(|e| CliError::io(&config_path, e))?;
    let artifact = train(&cfg.train)?;
    artifact.write_to(dir)?;
    Ok(artifact.summary)
}

/// True when `dir` holds a finished run of exactly `cfg`.
pub fn is_complete(cfg: &RunConfigFile, dir: &Path) -> bool {
    if !dir.join(RunArtifact::SUMMARY_FILE).is_file() {
        return false;
    }
    match (
        std::fs::read_to_string(dir.join(CONFIG_FILE)),
        cfg.to_toml_string(),
    ) {
        (Ok(stored), Ok(expected)) => stored == expected,
        _ => false,
    }
}
