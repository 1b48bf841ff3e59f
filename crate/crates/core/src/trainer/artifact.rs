use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::advantages::AdvantageEstimator;
use crate::envs::EnvKind;
use crate::objectives::{Aggregation, ObjectiveKind};
use crate::policy::PolicyParams;
use crate::{Error, Result};

use super::{MetricsRecord, TrainConfig};

pub const METRICS_COLUMNS: [&str; 13] = [
    "step",
    "substep",
    "objective",
    "iterations",
    "minibatch_size",
    "mean_reward",
    "clip_frac_high",
    "clip_frac_low",
    "mean_entropy",
    "kl_prev",
    "kl_ref",
    "mean_length",
    "grad_norm",
];

/// One `metrics.csv` line; field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub substep: usize,
    pub objective: ObjectiveKind,
    pub iterations: usize,
    pub minibatch_size: usize,
    pub mean_reward: f64,
    pub clip_frac_high: f64,
    pub clip_frac_low: f64,
    pub mean_entropy: f64,
    pub kl_prev: f64,
    pub kl_ref: f64,
    pub mean_length: f64,
    pub grad_norm: f64,
}

impl MetricsRow {
    pub fn new(cfg: &TrainConfig, r: &MetricsRecord) -> Self {
        Self {
            step: r.step,
            substep: r.optimizer_substep,
            objective: cfg.objective.kind,
            iterations: cfg.iterations,
            minibatch_size: cfg.minibatch_size(),
            mean_reward: r.mean_reward,
            clip_frac_high: r.clip_frac_high,
            clip_frac_low: r.clip_frac_low,
            mean_entropy: r.mean_entropy,
            kl_prev: r.kl_prev,
            kl_ref: r.kl_ref,
            mean_length: r.mean_length,
            grad_norm: r.grad_norm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseReason {
    RatioOverflow,
    RewardDrop,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub objective: ObjectiveKind,
    pub env: EnvKind,
    pub advantage_estimator: AdvantageEstimator,
    pub aggregation: Aggregation,
    pub eps: f64,
    pub beta: f64,
    pub iterations: usize,
    pub minibatch_size: usize,
    pub batch_ratio: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub steps_requested: usize,
    /// Rollout rounds whose update finished (or aborted) before the run ended.
    pub steps_completed: usize,
    pub gradient_steps: usize,
    pub collapsed: bool,
    pub collapse_reason: Option<CollapseReason>,
    /// Rollout round at which collapse was declared.
    pub collapse_step: Option<usize>,
    pub collapse_detail: Option<String>,
    /// Mean reward of the last rollout round (the collapse round for collapsed runs).
    pub final_reward: Option<f64>,
    pub max_reward: Option<f64>,
    /// `max_reward - final_reward`.
    pub final_reward_drop: Option<f64>,
    pub mean_clip_frac_high: Option<f64>,
    pub max_clip_frac_high: Option<f64>,
    pub mean_clip_frac_low: Option<f64>,
    pub max_clip_frac_low: Option<f64>,
    pub initial_entropy: Option<f64>,
    pub final_entropy: Option<f64>,
    pub final_kl_ref: Option<f64>,
    pub mean_kl_prev: Option<f64>,
    pub initial_length: Option<f64>,
    pub final_length: Option<f64>,
    /// Least-squares slope of mean response length per rollout round.
    pub length_slope: Option<f64>,
    pub round_rewards: Vec<f64>,
    pub round_lengths: Vec<f64>,
}

fn mean_of(records: &[MetricsRecord], f: impl Fn(&MetricsRecord) -> f64) -> Option<f64> {
    if records.is_empty() {
        None
    } else {
        Some(records.iter().map(&f).sum::<f64>() / records.len() as f64)
    }
}

fn max_of(records: &[MetricsRecord], f: impl Fn(&MetricsRecord) -> f64) -> Option<f64> {
    records.iter().map(f).reduce(f64::max)
}

/// OLS slope of `ys` against `0, 1, 2, ...`.
pub(crate) fn slope(ys: &[f64]) -> Option<f64> {
    if ys.len() < 2 {
        return None;
    }
    let n = ys.len() as f64;
    let xbar = (n - 1.0) / 2.0;
    let ybar = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - xbar;
        sxy += dx * (y - ybar);
        sxx += dx * dx;
    }
    Some(sxy / sxx)
}

impl RunSummary {
    pub(crate) fn build(
        cfg: &TrainConfig,
        records: &[MetricsRecord],
        round_rewards: &[f64],
        round_lengths: &[f64],
        collapse: Option<(CollapseReason, usize, String)>,
    ) -> Self {
        let final_reward = round_rewards.last().copied();
        let max_reward = round_rewards.iter().copied().reduce(f64::max);
        let (collapse_reason, collapse_step, collapse_detail) = match collapse {
            Some((r, s, d)) => (Some(r), Some(s), Some(d)),
            None => (None, None, None),
        };
        Self {
            objective: cfg.objective.kind,
            env: cfg.env.kind,
            advantage_estimator: cfg.advantage_estimator,
            aggregation: cfg.objective.aggregation,
            eps: cfg.objective.eps,
            beta: cfg.objective.beta,
            iterations: cfg.iterations,
            minibatch_size: cfg.minibatch_size(),
            batch_ratio: cfg.batch_ratio(),
            learning_rate: cfg.learning_rate,
            seed: cfg.seed,
            steps_requested: cfg.steps,
            steps_completed: round_rewards.len(),
            gradient_steps: records.len(),
            collapsed: collapse_reason.is_some(),
            collapse_reason,
            collapse_step,
            collapse_detail,
            final_reward,
            max_reward,
            final_reward_drop: max_reward.zip(final_reward).map(|(m, f)| m - f),
            mean_clip_frac_high: mean_of(records, |r| r.clip_frac_high),
            max_clip_frac_high: max_of(records, |r| r.clip_frac_high),
            mean_clip_frac_low: mean_of(records, |r| r.clip_frac_low),
            max_clip_frac_low: max_of(records, |r| r.clip_frac_low),
            initial_entropy: records.first().map(|r| r.mean_entropy),
            final_entropy: records.last().map(|r| r.mean_entropy),
            final_kl_ref: records.last().map(|r| r.kl_ref),
            mean_kl_prev: mean_of(records, |r| r.kl_prev),
            initial_length: round_lengths.first().copied(),
            final_length: round_lengths.last().copied(),
            length_slope: slope(round_lengths),
            round_rewards: round_rewards.to_vec(),
            round_lengths: round_lengths.to_vec(),
        }
    }
}

/// Everything a finished (or collapsed) run produces.
#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub config: TrainConfig,
    pub records: Vec<MetricsRecord>,
    pub final_params: PolicyParams,
    pub summary: RunSummary,
}

impl RunArtifact {
    pub const METRICS_FILE: &'static str = "metrics.csv";
    pub const SUMMARY_FILE: &'static str = "summary.json";
    pub const CHECKPOINT_FILE: &'static str = "checkpoint.csv";

    pub fn metrics_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.records.is_empty() {
            w.write_record(METRICS_COLUMNS)?;
        }
        for r in &self.records {
            w.serialize(MetricsRow::new(&self.config, r))?;
        }
        w.into_inner()
            .map_err(|e| Error::domain(format!("flushing metrics csv: {e}")))
    }

    /// Writes `metrics.csv`, `summary.json` and `checkpoint.csv` into `dir`.
    /// The summary is written last so its presence marks a complete run.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let metrics = dir.join(Self::METRICS_FILE);
        std::fs::write(&metrics, self.metrics_csv()?).map_err(|e| Error::io(&metrics, e))?;
        self.final_params
            .write_csv(&dir.join(Self::CHECKPOINT_FILE))?;
        let summary = dir.join(Self::SUMMARY_FILE);
        let mut json = serde_json::to_string_pretty(&self.summary)?;
        json.push('\n');
        std::fs::write(&summary, json).map_err(|e| Error::io(&summary, e))?;
        Ok(())
    }
}
