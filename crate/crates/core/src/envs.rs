//! Response-level reward environments.
//!
//! `Verifiable` pays 1 when the prompt's answer token appears and the response ends
//! with EOS. `LengthHackable` adds a capped per-token bonus on top of answer quality,
//! which a policy can exploit by emitting longer responses.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::policy::{PolicySpec, EOS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Verifiable,
    LengthHackable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub num_prompts: usize,
    pub vocab_size: usize,
    /// Correct token per prompt, in `[1, vocab_size)`.
    pub answer_map: Vec<usize>,
    #[serde(default = "unit")]
    pub quality_weight: f64,
    #[serde(default)]
    pub length_bonus: f64,
    #[serde(default = "unit_len")]
    pub length_cap: usize,
    #[serde(default)]
    pub reward_noise_std: f64,
}

fn unit() -> f64 {
    1.0
}

fn unit_len() -> usize {
    1
}

impl EnvSpec {
    pub fn verifiable(answer_map: Vec<usize>, vocab_size: usize) -> Self {
        Self {
            kind: EnvKind::Verifiable,
            num_prompts: answer_map.len(),
            vocab_size,
            answer_map,
            quality_weight: 1.0,
            length_bonus: 0.0,
            length_cap: 1,
            reward_noise_std: 0.0,
        }
    }

    pub fn length_hackable(
        answer_map: Vec<usize>,
        vocab_size: usize,
        length_bonus: f64,
        length_cap: usize,
    ) -> Self {
        Self {
            kind: EnvKind::LengthHackable,
            length_bonus,
            length_cap,
            ..Self::verifiable(answer_map, vocab_size)
        }
    }

    /// Checks the env against itself and the policy it will score.
    pub fn validate(&self, policy: &PolicySpec) -> Result<()> {
        if self.num_prompts == 0 {
            return Err(Error::Config("env.num_prompts must be positive".into()));
        }
        if self.answer_map.len() != self.num_prompts {
            return Err(Error::Config(format!(
                "env.answer_map has {} entries for {} prompts",
                self.answer_map.len(),
                self.num_prompts
            )));
        }
        if let Some(&bad) = self
            .answer_map
            .iter()
            .find(|&&a| a == EOS || a >= self.vocab_size)
        {
            return Err(Error::Config(format!(
                "env.answer_map token {bad} outside [1, {})",
                self.vocab_size
            )));
        }
        if self.vocab_size != policy.vocab_size || self.num_prompts != policy.num_prompts {
            return Err(Error::Config(format!(
                "env (vocab {}, prompts {}) does not match policy (vocab {}, prompts {})",
                self.vocab_size, self.num_prompts, policy.vocab_size, policy.num_prompts
            )));
        }
        if !(self.length_bonus.is_finite() && self.length_bonus >= 0.0) {
            return Err(Error::Config("env.length_bonus must be nonnegative".into()));
        }
        if !self.quality_weight.is_finite() {
            return Err(Error::Config("env.quality_weight must be finite".into()));
        }
        if self.kind == EnvKind::LengthHackable
            && (self.length_cap == 0 || self.length_cap > policy.max_len)
        {
            return Err(Error::Config(format!(
                "env.length_cap must be in [1, {}], got {}",
                policy.max_len, self.length_cap
            )));
        }
        if !(self.reward_noise_std.is_finite() && self.reward_noise_std >= 0.0) {
            return Err(Error::Config(
                "env.reward_noise_std must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

pub fn sample_prompt<R: Rng + ?Sized>(spec: &EnvSpec, rng: &mut R) -> usize {
    rng.random_range(0..spec.num_prompts)
}

/// Scores one response. Noise is drawn from `rng` only when `reward_noise_std > 0`.
pub fn reward<R: Rng + ?Sized>(
    spec: &EnvSpec,
    prompt_id: usize,
    tokens: &[usize],
    rng: &mut R,
) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::domain("cannot score an empty response"));
    }
    let answer = *spec
        .answer_map
        .get(prompt_id)
        .ok_or_else(|| Error::domain(format!("prompt {prompt_id} out of range")))?;
    let has_answer = tokens.contains(&answer);
    let base = match spec.kind {
        EnvKind::Verifiable => {
            let terminated = tokens.last() == Some(&EOS);
            if has_answer && terminated {
                1.0
            } else {
                0.0
            }
        }
        EnvKind::LengthHackable => {
            let quality = if has_answer { 1.0 } else { 0.0 };
            spec.quality_weight * quality
                + spec.length_bonus * tokens.len().min(spec.length_cap) as f64
        }
    };
    if spec.reward_noise_std > 0.0 {
        let noise =
            Normal::new(0.0, spec.reward_noise_std).map_err(|e| Error::domain(e.to_string()))?;
        Ok(base + noise.sample(rng))
    } else {
        Ok(base)
    }
}
