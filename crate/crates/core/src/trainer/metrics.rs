use serde::{Deserialize, Serialize};

use crate::objectives::ObjectiveConfig;
use crate::policy::{entropy, policy_kl, PolicyParams, StateIndex};
use crate::Result;

use super::RolloutBatch;

/// Diagnostics for one gradient step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// Rollout round.
    pub step: usize,
    /// Gradient step within the round.
    pub optimizer_substep: usize,
    /// Mean reward of the whole rollout batch.
    pub mean_reward: f64,
    /// Share of mini-batch tokens with `r > 1 + eps_high` when the gradient was taken.
    pub clip_frac_high: f64,
    /// Share of mini-batch tokens with `r < 1 - eps_low` when the gradient was taken.
    pub clip_frac_low: f64,
    /// Policy entropy after the step, averaged over visited token states.
    pub mean_entropy: f64,
    /// `KL(π_before ‖ π_after)` over visited states.
    pub kl_prev: f64,
    /// `KL(π_after ‖ π_ref)` over visited states.
    pub kl_ref: f64,
    /// Mean response length of the rollout batch, in tokens.
    pub mean_length: f64,
    pub grad_norm: f64,
}

/// Token states of the listed responses, with multiplicity.
pub(crate) fn visited_states(batch: &RolloutBatch, indices: &[usize]) -> Vec<StateIndex> {
    indices
        .iter()
        .flat_map(|&i| batch.states[i].iter().copied())
        .collect()
}

/// Clip fractions of the listed responses' tokens under `params`.
pub fn clip_fractions(
    params: &PolicyParams,
    batch: &RolloutBatch,
    indices: &[usize],
    cfg: &ObjectiveConfig,
) -> (f64, f64) {
    let (hi_bound, lo_bound) = (1.0 + cfg.eps_high(), 1.0 - cfg.eps_low());
    let (mut hi, mut lo, mut n) = (0usize, 0usize, 0usize);
    for &i in indices {
        let resp = &batch.responses[i];
        for (t, (state, &tok)) in batch.states[i].iter().zip(&resp.tokens).enumerate() {
            let r = (crate::policy::log_prob(params, state, tok) - resp.logps[t]).exp();
            n += 1;
            if r > hi_bound {
                hi += 1;
            } else if r < lo_bound {
                lo += 1;
            }
        }
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    (hi as f64 / n as f64, lo as f64 / n as f64)
}

/// Builds the record for one gradient step on the responses `indices`, taken from
/// `before` to `after`. Step counters and `grad_norm` are left at zero for the caller.
pub fn compute_metrics(
    batch: &RolloutBatch,
    indices: &[usize],
    before: &PolicyParams,
    after: &PolicyParams,
    reference: &PolicyParams,
    cfg: &ObjectiveConfig,
) -> Result<MetricsRecord> {
    let (clip_frac_high, clip_frac_low) = clip_fractions(before, batch, indices, cfg);
    let states = visited_states(batch, indices);
    let (mean_entropy, kl_prev, kl_ref) = if states.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let h = states.iter().map(|s| entropy(after, s)).sum::<f64>() / states.len() as f64;
        (
            h,
            policy_kl(before, after, &states)?,
            policy_kl(after, reference, &states)?,
        )
    };
    Ok(MetricsRecord {
        step: 0,
        optimizer_substep: 0,
        mean_reward: batch.mean_reward(),
        clip_frac_high,
        clip_frac_low,
        mean_entropy,
        kl_prev,
        kl_ref,
        mean_length: batch.mean_length(),
        grad_norm: 0.0,
    })
}
