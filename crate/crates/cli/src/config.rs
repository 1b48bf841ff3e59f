//! Run configuration files.
//!
//! A run file is a TOML document holding every `TrainConfig` field at top level
//! plus two run-level keys:
//!
//! ```toml
//! run_name = "clip-mu4"        # required; the run directory name
//! output_dir = "runs"          # optional; output root
//!
//! learning_rate = 3.0
//! steps = 80
//! batch_size = 16
//! group_size = 4
//! iterations = 4
//! minibatch_size = 16          # optional; full batch when omitted
//! seed = 0
//! advantage_estimator = "group_relative"   # or "leave_one_out"
//!
//! [objective]
//! kind = "clip"                # or "cfpo"
//! eps = 0.2
//!
//! [env]
//! kind = "verifiable"          # or "length_hackable"
//! num_prompts = 4
//! vocab_size = 6
//! answer_map = [1, 2, 3, 4]
//!
//! [policy]
//! vocab_size = 6
//! num_prompts = 4
//! max_len = 6
//! ```
//!
//! Unknown keys are rejected. Parse errors carry `file:line:column`.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::de::{DeTable, DeValue, Deserializer, ValueDeserializer};
use toml::Spanned;

use cfpo_core::trainer::TrainConfig;

use crate::error::{CliError, Result};

pub const RUN_NAME_KEY: &str = "run_name";
pub const OUTPUT_DIR_KEY: &str = "output_dir";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfigFile {
    pub run_name: String,
    pub output_dir: Option<PathBuf>,
    pub train: TrainConfig,
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn located(origin: &str, text: &str, err: &toml::de::Error) -> CliError {
    let (line, col) = err.span().map_or((1, 1), |s| line_col(text, s.start));
    CliError::Config(format!("{origin}:{line}:{col}: {}", err.message()))
}

fn header_value<T: for<'de> Deserialize<'de>>(
    origin: &str,
    text: &str,
    value: Spanned<DeValue<'_>>,
) -> Result<T> {
    T::deserialize(ValueDeserializer::from(value)).map_err(|e| located(origin, text, &e))
}

impl RunConfigFile {
    /// Parses and validates a run document; `origin` labels error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut doc = DeTable::parse(text).map_err(|e| located(origin, text, &e))?;
        let table = doc.get_mut();
        let run_name = table.remove(RUN_NAME_KEY);
        let output_dir = table.remove(OUTPUT_DIR_KEY);

        let train = TrainConfig::deserialize(Deserializer::from(doc))
            .map_err(|e| located(origin, text, &e))?;
        let run_name: String = match run_name {
            Some(v) => header_value(origin, text, v)?,
            None => {
                return Err(CliError::Config(format!(
                    "{origin}:1:1: missing field `{RUN_NAME_KEY}`"
                )))
            }
        };
        if run_name.is_empty()
            || run_name.contains(['/', '\\'])
            || run_name == "."
            || run_name == ".."
        {
            return Err(CliError::Config(format!(
                "{origin}: `{RUN_NAME_KEY}` must be a plain directory name, got {run_name:?}"
            )));
        }
        let output_dir: Option<PathBuf> = output_dir
            .map(|v| header_value(origin, text, v))
            .transpose()?;
        train
            .validate()
            .map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        Ok(Self {
            run_name,
            output_dir,
            train,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// The document as a TOML table; the inverse of `parse`.
    pub fn to_table(&self) -> Result<toml::Table> {
        let mut table = toml::Table::try_from(&self.train)
            .map_err(|e| CliError::Config(format!("serialising config: {e}")))?;
        table.insert(
            RUN_NAME_KEY.into(),
            toml::Value::String(self.run_name.clone()),
        );
        if let Some(dir) = &self.output_dir {
            let dir = dir.to_str().ok_or_else(|| {
                CliError::Config(format!("output_dir {dir:?} is not valid UTF-8"))
            })?;
            table.insert(OUTPUT_DIR_KEY.into(), toml::Value::String(dir.into()));
        }
        Ok(table)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(&self.to_table()?)
            .map_err(|e| CliError::Config(format!("serialising config: {e}")))
    }
}

/// Resolves the output root: explicit flag, then the config's `output_dir`, then
/// `CFPO_OUT_DIR`, then `./runs`.
pub fn output_root(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.map(Path::to_path_buf))
        .or_else(|| std::env::var_os(crate::OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}
