use rayon::prelude::*;

use crate::advantages::{AdvantageEstimator, RewardGroup};
use crate::envs::{reward, sample_prompt};
use crate::policy::{
    log_prob, response_states, sample_response, PolicyParams, Response, StateIndex,
};
use crate::rng::{Purpose, Streams};
use crate::{Error, Result};

use super::TrainConfig;

/// One rollout: `batch_size` prompts, `group_size` responses each, stored prompt-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub group_size: usize,
    pub prompts: Vec<usize>,
    /// `responses[p * group_size + j]` is member `j` of prompt slot `p`.
    /// Each response's `logps` are the snapshot (old-policy) log-probabilities.
    pub responses: Vec<Response>,
    pub states: Vec<Vec<StateIndex>>,
    pub ref_logps: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    /// Empty until [`compute_advantages`] runs.
    pub advantages: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn mean_reward(&self) -> f64 {
        mean(&self.rewards)
    }

    pub fn mean_length(&self) -> f64 {
        let total: usize = self.responses.iter().map(Response::len).sum();
        total as f64 / self.len().max(1) as f64
    }

    pub fn num_tokens(&self, indices: &[usize]) -> usize {
        indices.iter().map(|&i| self.responses[i].len()).sum()
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Samples a batch from `params`. Each prompt slot and each group member draws
/// from its own stream keyed by `(step, slot, member)`, so the result does not
/// depend on how the work is scheduled.
pub fn rollout(
    params: &PolicyParams,
    reference: &PolicyParams,
    cfg: &TrainConfig,
    streams: &Streams,
    step: u64,
) -> Result<RolloutBatch> {
    let prompts: Vec<usize> = (0..cfg.batch_size as u64)
        .map(|slot| {
            sample_prompt(
                &cfg.env,
                &mut streams.stream(Purpose::Prompt, &[step, slot]),
            )
        })
        .collect();
    let g = cfg.group_size;
    let samples: Vec<(Response, Vec<StateIndex>, Vec<f64>, f64)> = (0..prompts.len() * g)
        .into_par_iter()
        .map(|k| {
            let (slot, member) = ((k / g) as u64, (k % g) as u64);
            let prompt = prompts[k / g];
            let mut rng = streams.stream(Purpose::Response, &[step, slot, member]);
            let resp = sample_response(params, prompt, &mut rng, cfg.temperature)?;
            let states = response_states(params.spec(), prompt, &resp.tokens)?;
            let ref_logps = states
                .iter()
                .zip(&resp.tokens)
                .map(|(s, &t)| log_prob(reference, s, t))
                .collect();
            let mut noise = streams.stream(Purpose::RewardNoise, &[step, slot, member]);
            let r = reward(&cfg.env, prompt, &resp.tokens, &mut noise)?;
            Ok((resp, states, ref_logps, r))
        })
        .collect::<Result<_>>()?;

    let mut batch = RolloutBatch {
        group_size: g,
        prompts,
        responses: Vec::with_capacity(samples.len()),
        states: Vec::with_capacity(samples.len()),
        ref_logps: Vec::with_capacity(samples.len()),
        rewards: Vec::with_capacity(samples.len()),
        advantages: Vec::new(),
    };
    for (resp, states, ref_lp, r) in samples {
        batch.responses.push(resp);
        batch.states.push(states);
        batch.ref_logps.push(ref_lp);
        batch.rewards.push(r);
    }
    Ok(batch)
}

/// Fills `batch.advantages`, one group per prompt slot, in response order.
pub fn compute_advantages(batch: &mut RolloutBatch, estimator: AdvantageEstimator) -> Result<()> {
    if batch.group_size < 2 {
        return Err(Error::domain(format!(
            "advantage estimation needs group_size >= 2, got {}",
            batch.group_size
        )));
    }
    if batch.rewards.len() != batch.prompts.len() * batch.group_size {
        return Err(Error::domain(
            "reward count does not match prompts x group_size",
        ));
    }
    let mut adv = Vec::with_capacity(batch.rewards.len());
    for group in batch.rewards.chunks(batch.group_size) {
        adv.extend(RewardGroup::new(group)?.estimate(estimator));
    }
    batch.advantages = adv;
    Ok(())
}
