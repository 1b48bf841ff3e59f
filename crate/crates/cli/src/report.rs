//! Aggregation of finished run directories into `summary.csv` and `comparison.csv`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cfpo_core::advantages::AdvantageEstimator;
use cfpo_core::envs::EnvKind;
use cfpo_core::objectives::ObjectiveKind;
use cfpo_core::trainer::{RunArtifact, RunSummary};

use crate::error::{CliError, Result};

pub const SUMMARY_CSV: &str = "summary.csv";
pub const COMPARISON_CSV: &str = "comparison.csv";

/// One `summary.csv` line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run: String,
    pub objective: ObjectiveKind,
    pub env: EnvKind,
    pub advantage_estimator: AdvantageEstimator,
    pub beta: f64,
    pub iterations: usize,
    pub batch_ratio: usize,
    pub minibatch_size: usize,
    pub seed: u64,
    pub steps_completed: usize,
    pub collapsed: bool,
    pub collapse_step: Option<usize>,
    pub final_reward: Option<f64>,
    pub max_reward: Option<f64>,
    pub final_reward_drop: Option<f64>,
    pub mean_clip_frac_high: Option<f64>,
    pub max_clip_frac_high: Option<f64>,
    pub mean_clip_frac_low: Option<f64>,
    pub max_clip_frac_low: Option<f64>,
    pub final_entropy: Option<f64>,
    pub final_kl_ref: Option<f64>,
    pub mean_kl_prev: Option<f64>,
    pub length_growth: Option<f64>,
    pub length_slope: Option<f64>,
}

impl SummaryRow {
    pub fn new(run: String, s: &RunSummary) -> Self {
        Self {
            run,
            objective: s.objective,
            env: s.env,
            advantage_estimator: s.advantage_estimator,
            beta: s.beta,
            iterations: s.iterations,
            batch_ratio: s.batch_ratio,
            minibatch_size: s.minibatch_size,
            seed: s.seed,
            steps_completed: s.steps_completed,
            collapsed: s.collapsed,
            collapse_step: s.collapse_step,
            final_reward: s.final_reward,
            max_reward: s.max_reward,
            final_reward_drop: s.final_reward_drop,
            mean_clip_frac_high: s.mean_clip_frac_high,
            max_clip_frac_high: s.max_clip_frac_high,
            mean_clip_frac_low: s.mean_clip_frac_low,
            max_clip_frac_low: s.max_clip_frac_low,
            final_entropy: s.final_entropy,
            final_kl_ref: s.final_kl_ref,
            mean_kl_prev: s.mean_kl_prev,
            length_growth: s.final_length.zip(s.initial_length).map(|(f, i)| f - i),
            length_slope: s.length_slope,
        }
    }
}

/// One `comparison.csv` line: seed medians within an (objective, iterations, batch ratio) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub objective: ObjectiveKind,
    pub iterations: usize,
    pub batch_ratio: usize,
    pub runs: usize,
    pub collapsed_runs: usize,
    pub median_final_reward: Option<f64>,
    pub median_final_reward_drop: Option<f64>,
    pub median_mean_clip_frac_high: Option<f64>,
    pub median_mean_clip_frac_low: Option<f64>,
    pub median_final_entropy: Option<f64>,
    pub median_mean_kl_prev: Option<f64>,
    pub median_length_growth: Option<f64>,
    pub median_length_slope: Option<f64>,
}

/// Median of the present values; the mean of the middle pair for even counts.
pub fn median(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let mut v: Vec<f64> = values
        .into_iter()
        .flatten()
        .filter(|x| !x.is_nan())
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub fn compare(rows: &[SummaryRow]) -> Vec<ComparisonRow> {
    let mut groups: BTreeMap<(&str, usize, usize), Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.objective.as_str(), r.iterations, r.batch_ratio))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let m = |f: fn(&SummaryRow) -> Option<f64>| median(g.iter().map(|r| f(r)));
            ComparisonRow {
                objective: g[0].objective,
                iterations: g[0].iterations,
                batch_ratio: g[0].batch_ratio,
                runs: g.len(),
                collapsed_runs: g.iter().filter(|r| r.collapsed).count(),
                median_final_reward: m(|r| r.final_reward),
                median_final_reward_drop: m(|r| r.final_reward_drop),
                median_mean_clip_frac_high: m(|r| r.mean_clip_frac_high),
                median_mean_clip_frac_low: m(|r| r.mean_clip_frac_low),
                median_final_entropy: m(|r| r.final_entropy),
                median_mean_kl_prev: m(|r| r.mean_kl_prev),
                median_length_growth: m(|r| r.length_growth),
                median_length_slope: m(|r| r.length_slope),
            }
        })
        .collect()
}

fn collect_summaries(dir: &Path, root: &Path, out: &mut Vec<(String, PathBuf)>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| CliError::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    let summary = dir.join(RunArtifact::SUMMARY_FILE);
    if summary.is_file() {
        let rel = dir.strip_prefix(root).unwrap_or(dir);
        let name = if rel.as_os_str().is_empty() {
            ".".to_string()
        } else {
            rel.to_string_lossy().replace('\\', "/")
        };
        out.push((name, summary));
    }
    for e in entries.into_iter().filter(|p| p.is_dir()) {
        collect_summaries(&e, root, out)?;
    }
    Ok(())
}

/// Finds every completed run below `runs_dir`, in path order.
pub fn load_runs(runs_dir: &Path) -> Result<Vec<SummaryRow>> {
    let mut found = Vec::new();
    collect_summaries(runs_dir, runs_dir, &mut found)?;
    found
        .into_iter()
        .map(|(name, path)| {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let s: RunSummary = serde_json::from_str(&text).map_err(|e| {
                CliError::Config(format!("{}: malformed run summary: {e}", path.display()))
            })?;
            Ok(SummaryRow::new(name, &s))
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(cfpo_core::Error::from)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::io(path, std::io::Error::other(e.to_string())))?;
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub summary: Vec<SummaryRow>,
    pub comparison: Vec<ComparisonRow>,
}

/// Writes `summary.csv` and `comparison.csv` into `out` (default `runs_dir`).
pub fn cmd_report(runs_dir: &Path, out: Option<&Path>) -> Result<Report> {
    let summary = load_runs(runs_dir)?;
    if summary.is_empty() {
        return Err(CliError::Config(format!(
            "{}: no completed runs (no {} found)",
            runs_dir.display(),
            RunArtifact::SUMMARY_FILE
        )));
    }
    let comparison = compare(&summary);
    let out = out.unwrap_or(runs_dir);
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_csv(&out.join(SUMMARY_CSV), &summary)?;
    write_csv(&out.join(COMPARISON_CSV), &comparison)?;
    Ok(Report {
        summary,
        comparison,
    })
}
