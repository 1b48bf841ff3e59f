use serde::{Deserialize, Serialize};

use crate::advantages::AdvantageEstimator;
use crate::envs::EnvSpec;
use crate::objectives::ObjectiveConfig;
use crate::policy::PolicySpec;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: ObjectiveConfig,
    pub env: EnvSpec,
    pub policy: PolicySpec,
    /// Prompts per rollout.
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Responses per prompt.
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    /// Passes over each rollout batch (sample reuse).
    #[serde(default = "one")]
    pub iterations: usize,
    /// Responses per gradient step; the full batch when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minibatch_size: Option<usize>,
    pub learning_rate: f64,
    /// Rollout rounds.
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_estimator")]
    pub advantage_estimator: AdvantageEstimator,
    /// Sampling temperature; stored log-probabilities are always untempered.
    #[serde(default = "unit")]
    pub temperature: f64,
}

fn default_batch_size() -> usize {
    128
}

fn default_group_size() -> usize {
    3
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

fn default_estimator() -> AdvantageEstimator {
    AdvantageEstimator::GroupRelative
}

impl TrainConfig {
    pub fn responses_per_batch(&self) -> usize {
        self.batch_size * self.group_size
    }

    pub fn minibatch_size(&self) -> usize {
        self.minibatch_size
            .unwrap_or_else(|| self.responses_per_batch())
    }

    /// Rollout size over mini-batch size: lagged gradient steps per pass.
    pub fn batch_ratio(&self) -> usize {
        self.responses_per_batch() / self.minibatch_size().max(1)
    }

    pub fn gradient_steps_per_rollout(&self) -> usize {
        self.iterations * self.batch_ratio()
    }

    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        self.policy.validate()?;
        self.env.validate(&self.policy)?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.group_size < 2 {
            return Err(Error::Config(format!(
                "group_size must be at least 2, got {}",
                self.group_size
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        let total = self.responses_per_batch();
        let mb = self.minibatch_size();
        if mb == 0 || mb > total {
            return Err(Error::Config(format!(
                "minibatch_size must be in [1, {total}], got {mb}"
            )));
        }
        if !total.is_multiple_of(mb) {
            return Err(Error::Config(format!(
                "batch_size * group_size = {total} is not divisible by minibatch_size = {mb}"
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}
