//! Cartesian sweeps over dotted config keys.
//!
//! ```toml
//! parallelism = 4              # optional, default 1
//! max_runs = 512               # optional, default 512
//!
//! [axes]
//! iterations = [1, 2, 4, 8, 16]
//! "objective.kind" = ["clip", "cfpo"]
//! seed = [0, 1, 2, 3, 4]
//!
//! [base]
//! run_name = "stress"          # names the sweep directory
//! # ... a complete run config
//! ```
//!
//! Axes are ordered by key; the first key varies slowest. Point `i` runs in
//! `<root>/<base.run_name>/run-<i>`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfigFile, OUTPUT_DIR_KEY, RUN_NAME_KEY};
use crate::error::{CliError, Result};
use crate::run;

pub const DEFAULT_MAX_RUNS: usize = 512;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    #[serde(default = "one")]
    parallelism: usize,
    #[serde(default = "default_max")]
    max_runs: usize,
    axes: toml::Table,
    base: toml::Table,
}

fn one() -> usize {
    1
}

fn default_max() -> usize {
    DEFAULT_MAX_RUNS
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub name: String,
    pub output_dir: Option<PathBuf>,
    pub base: toml::Table,
    pub axes: Vec<(String, Vec<toml::Value>)>,
    pub parallelism: usize,
    pub max_runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub assignments: Vec<(String, toml::Value)>,
    pub config: RunConfigFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub run_dir: String,
    pub point: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub sweep: String,
    pub axes: Vec<String>,
    pub runs: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub executed: Vec<usize>,
    pub skipped: Vec<usize>,
}

/// Sets `key` (dot-separated) in `table`, creating intermediate tables.
pub fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed axis key {key:?}")));
    }
    let (leaf, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in path {
        let next = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match next {
            toml::Value::Table(t) => t,
            _ => {
                return Err(CliError::Config(format!(
                    "axis {key:?}: {p:?} is not a table"
                )))
            }
        };
    }
    cur.insert(leaf.to_string(), value);
    Ok(())
}

fn point_name(index: usize) -> String {
    format!("run-{index:04}")
}

impl SweepSpec {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let raw: RawSweep = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(1, |s| {
                text[..s.start.min(text.len())].matches('\n').count() + 1
            });
            CliError::Config(format!("{origin}:{line}: {}", e.message()))
        })?;
        if raw.parallelism == 0 {
            return Err(CliError::Config(format!(
                "{origin}: parallelism must be positive"
            )));
        }
        if raw.axes.is_empty() {
            return Err(CliError::Config(format!(
                "{origin}: sweep needs at least one axis"
            )));
        }
        let mut axes = Vec::with_capacity(raw.axes.len());
        for (key, values) in raw.axes {
            if key == RUN_NAME_KEY || key == OUTPUT_DIR_KEY {
                return Err(CliError::Config(format!(
                    "{origin}: axis {key:?} cannot be swept"
                )));
            }
            match values {
                toml::Value::Array(v) if !v.is_empty() => axes.push((key, v)),
                _ => {
                    return Err(CliError::Config(format!(
                        "{origin}: axis {key:?} must be a nonempty array"
                    )))
                }
            }
        }
        let name = match raw.base.get(RUN_NAME_KEY) {
            Some(toml::Value::String(s)) => s.clone(),
            _ => {
                return Err(CliError::Config(format!(
                    "{origin}: [base] needs a string `{RUN_NAME_KEY}`"
                )))
            }
        };
        let output_dir = match raw.base.get(OUTPUT_DIR_KEY) {
            None => None,
            Some(toml::Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => {
                return Err(CliError::Config(format!(
                    "{origin}: `{OUTPUT_DIR_KEY}` must be a string"
                )))
            }
        };
        let spec = Self {
            name,
            output_dir,
            base: raw.base,
            axes,
            parallelism: raw.parallelism,
            max_runs: raw.max_runs,
        };
        let size = spec.size();
        if size > spec.max_runs {
            return Err(CliError::Config(format!(
                "{origin}: grid has {size} points, over the limit of {}",
                spec.max_runs
            )));
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn size(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    /// Every grid point with its validated config, in manifest order.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        let mut out = Vec::with_capacity(self.size());
        let mut pick = vec![0usize; self.axes.len()];
        for index in 0..self.size() {
            let mut table = self.base.clone();
            let mut assignments = Vec::with_capacity(self.axes.len());
            for ((key, values), &k) in self.axes.iter().zip(&pick) {
                set_dotted(&mut table, key, values[k].clone())?;
                assignments.push((key.clone(), values[k].clone()));
            }
            let name = point_name(index);
            table.insert(RUN_NAME_KEY.into(), toml::Value::String(name.clone()));
            table.remove(OUTPUT_DIR_KEY);
            let text = toml::to_string(&table).map_err(|e| CliError::Config(e.to_string()))?;
            let config = RunConfigFile::parse(&text, &format!("{}[{name}]", self.name))?;
            out.push(GridPoint {
                index,
                assignments,
                config,
            });
            for s in (0..pick.len()).rev() {
                pick[s] += 1;
                if pick[s] < self.axes[s].1.len() {
                    break;
                }
                pick[s] = 0;
            }
        }
        Ok(out)
    }

    pub fn manifest(&self, points: &[GridPoint]) -> Result<Manifest> {
        let runs = points
            .iter()
            .map(|p| {
                let point = p
                    .assignments
                    .iter()
                    .map(|(k, v)| {
                        Ok((
                            k.clone(),
                            serde_json::to_value(v).map_err(cfpo_core::Error::from)?,
                        ))
                    })
                    .collect::<Result<_>>()?;
                Ok(ManifestEntry {
                    index: p.index,
                    run_dir: p.config.run_name.clone(),
                    point,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Manifest {
            sweep: self.name.clone(),
            axes: self.axes.iter().map(|(k, _)| k.clone()).collect(),
            runs,
        })
    }
}

/// Runs every incomplete grid point under `root/<name>`, up to `parallelism` at once.
pub fn run_sweep(
    spec: &SweepSpec,
    root: &Path,
    parallelism: Option<usize>,
    quiet: bool,
) -> Result<SweepOutcome> {
    let points = spec.points()?;
    let manifest = spec.manifest(&points)?;
    let dir = root.join(&spec.name);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(cfpo_core::Error::from)? + "\n";
    std::fs::write(&manifest_path, json).map_err(|e| CliError::io(&manifest_path, e))?;

    let (done, todo): (Vec<&GridPoint>, Vec<&GridPoint>) = points
        .iter()
        .partition(|p| run::is_complete(&p.config, &run::run_dir(&dir, &p.config)));
    let threads = parallelism.unwrap_or(spec.parallelism).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<usize>> = pool.install(|| {
        todo.par_iter()
            .map(|p| {
                let summary = run::execute(&p.config, &run::run_dir(&dir, &p.config))?;
                if !quiet {
                    eprintln!(
                        "{}: {} steps, final reward {:.4}{}",
                        p.config.run_name,
                        summary.steps_completed,
                        summary.final_reward.unwrap_or(f64::NAN),
                        if summary.collapsed { ", collapsed" } else { "" }
                    );
                }
                Ok(p.index)
            })
            .collect()
    });
    let executed = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SweepOutcome {
        dir,
        manifest,
        executed,
        skipped: done.iter().map(|p| p.index).collect(),
    })
}
