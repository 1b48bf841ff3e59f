//! Rollout / advantage / update loop with sample reuse (`iterations`) and
//! mini-batch policy lag (`batch_ratio`).
//!
//! Every gradient step inside an epoch measures ratios against the log-probabilities
//! recorded at rollout time. The snapshot is never refreshed mid-epoch, so with
//! `iterations = 1` and a full-batch mini-batch every ratio is exactly 1 and the two
//! objectives produce identical trajectories.

mod artifact;
mod config;
mod gradient;
mod metrics;
mod rollout;

use rand::seq::SliceRandom;

use crate::policy::PolicyParams;
use crate::rng::{Purpose, Streams};
use crate::{Error, Result};

pub use artifact::{CollapseReason, MetricsRow, RunArtifact, RunSummary, METRICS_COLUMNS};
pub use config::TrainConfig;
pub use gradient::{surrogate_gradient, surrogate_loss, SurrogateGrad, LOG_RATIO_LIMIT};
pub use metrics::{clip_fractions, compute_metrics, MetricsRecord};
pub use rollout::{compute_advantages, rollout, RolloutBatch};

/// Rollout rounds in a row whose mean reward stays under the collapse threshold.
pub const COLLAPSE_PATIENCE: usize = 20;
/// Fraction of the running maximum reward below which a round counts toward collapse.
pub const COLLAPSE_FRACTION: f64 = 0.1;

/// Result of one epoch over a rollout batch.
#[derive(Debug)]
pub struct EpochOutcome {
    pub params: PolicyParams,
    pub records: Vec<MetricsRecord>,
    /// Set when a gradient step hit the ratio-overflow guard; `records` hold the
    /// steps completed before it.
    pub abort: Option<Error>,
}

/// Runs `iterations` shuffled passes of mini-batch gradient descent on the loss.
pub fn update_epoch(
    params: &PolicyParams,
    reference: &PolicyParams,
    batch: &RolloutBatch,
    cfg: &TrainConfig,
    streams: &Streams,
    step: usize,
) -> Result<EpochOutcome> {
    if batch.advantages.len() != batch.len() {
        return Err(Error::domain("update_epoch needs a batch with advantages"));
    }
    let mb = cfg.minibatch_size();
    if mb == 0 || !batch.len().is_multiple_of(mb) {
        return Err(Error::Config(format!(
            "batch of {} responses is not divisible by minibatch_size {mb}",
            batch.len()
        )));
    }
    let mut cur = params.clone();
    let mut records = Vec::with_capacity(cfg.gradient_steps_per_rollout());
    let mut substep = 0;
    for pass in 0..cfg.iterations {
        let mut order: Vec<usize> = (0..batch.len()).collect();
        order.shuffle(&mut streams.stream(Purpose::Shuffle, &[step as u64, pass as u64]));
        for chunk in order.chunks(mb) {
            let mut idx = chunk.to_vec();
            idx.sort_unstable();
            let g = match surrogate_gradient(&cur, batch, &idx, &cfg.objective) {
                Ok(g) => g,
                Err(e @ Error::RatioOverflow { .. }) | Err(e @ Error::KlOverflow(_)) => {
                    return Ok(EpochOutcome {
                        params: cur,
                        records,
                        abort: Some(e),
                    })
                }
                Err(e) => return Err(e),
            };
            let before = cur.clone();
            for (p, d) in cur.theta_mut().iter_mut().zip(&g.grad) {
                *p -= cfg.learning_rate * d;
            }
            let mut rec = compute_metrics(batch, &idx, &before, &cur, reference, &cfg.objective)?;
            rec.step = step;
            rec.optimizer_substep = substep;
            rec.grad_norm = g.norm();
            records.push(rec);
            substep += 1;
        }
    }
    Ok(EpochOutcome {
        params: cur,
        records,
        abort: None,
    })
}

/// Trains from a uniform initial policy, which is also the KL reference.
pub fn train(cfg: &TrainConfig) -> Result<RunArtifact> {
    cfg.validate()?;
    let initial = PolicyParams::zeros(cfg.policy);
    train_from(cfg, initial)
}

pub fn train_from(cfg: &TrainConfig, initial: PolicyParams) -> Result<RunArtifact> {
    cfg.validate()?;
    if initial.spec() != &cfg.policy {
        return Err(Error::Config(
            "initial parameters do not match the policy spec".into(),
        ));
    }
    let streams = Streams::new(cfg.seed);
    let reference = initial.clone();
    let mut params = initial;
    let mut records = Vec::new();
    let mut round_rewards = Vec::new();
    let mut round_lengths = Vec::new();
    let mut collapse = None;
    let mut running_max = f64::NEG_INFINITY;
    let mut low_rounds = 0;

    for step in 0..cfg.steps {
        let mut batch = rollout(&params, &reference, cfg, &streams, step as u64)?;
        compute_advantages(&mut batch, cfg.advantage_estimator)?;
        let reward = batch.mean_reward();
        round_rewards.push(reward);
        round_lengths.push(batch.mean_length());

        let outcome = update_epoch(&params, &reference, &batch, cfg, &streams, step)?;
        params = outcome.params;
        records.extend(outcome.records);
        if let Some(err) = outcome.abort {
            collapse = Some((CollapseReason::RatioOverflow, step, err.to_string()));
            break;
        }

        running_max = running_max.max(reward);
        if running_max > 0.0 && reward < COLLAPSE_FRACTION * running_max {
            low_rounds += 1;
        } else {
            low_rounds = 0;
        }
        if low_rounds >= COLLAPSE_PATIENCE {
            collapse = Some((
                CollapseReason::RewardDrop,
                step,
                format!("mean reward below {COLLAPSE_FRACTION} x running max for {COLLAPSE_PATIENCE} rounds"),
            ));
            break;
        }
    }

    let summary = RunSummary::build(cfg, &records, &round_rewards, &round_lengths, collapse);
    Ok(RunArtifact {
        config: cfg.clone(),
        records,
        final_params: params,
        summary,
    })
}
