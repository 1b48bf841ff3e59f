//! Critic-free advantage estimators over a group of responses to one prompt.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageEstimator {
    GroupRelative,
    LeaveOneOut,
}

/// Which standard deviation normalises group-relative advantages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdMode {
    /// Divide by `G`.
    #[default]
    Population,
    /// Divide by `G - 1`.
    Sample,
}

/// Per-response rewards of one prompt's group; at least two finite entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardGroup<'a>(&'a [f64]);

impl<'a> RewardGroup<'a> {
    pub fn new(rewards: &'a [f64]) -> Result<Self> {
        if rewards.len() < 2 {
            return Err(Error::domain(format!(
                "reward group needs at least 2 responses, got {}",
                rewards.len()
            )));
        }
        if let Some(bad) = rewards.iter().find(|r| !r.is_finite()) {
            return Err(Error::domain(format!("reward {bad} is not finite")));
        }
        Ok(Self(rewards))
    }

    pub fn rewards(&self) -> &'a [f64] {
        self.0
    }

    fn is_constant(&self) -> bool {
        let first = self.0[0];
        self.0.iter().all(|&r| r == first)
    }

    pub fn group_relative(&self, mode: StdMode) -> Vec<f64> {
        if self.is_constant() {
            return vec![0.0; self.0.len()];
        }
        let n = self.0.len() as f64;
        let mean = self.0.iter().sum::<f64>() / n;
        let ss: f64 = self.0.iter().map(|r| (r - mean) * (r - mean)).sum();
        let denom = match mode {
            StdMode::Population => n,
            StdMode::Sample => n - 1.0,
        };
        let std = (ss / denom).sqrt();
        if std == 0.0 {
            return vec![0.0; self.0.len()];
        }
        self.0.iter().map(|r| (r - mean) / std).collect()
    }

    pub fn leave_one_out(&self) -> Vec<f64> {
        if self.is_constant() {
            return vec![0.0; self.0.len()];
        }
        let k = self.0.len() as f64;
        let total: f64 = self.0.iter().sum();
        self.0.iter().map(|r| (k * r - total) / (k - 1.0)).collect()
    }

    pub fn estimate(&self, estimator: AdvantageEstimator) -> Vec<f64> {
        match estimator {
            AdvantageEstimator::GroupRelative => self.group_relative(StdMode::Population),
            AdvantageEstimator::LeaveOneOut => self.leave_one_out(),
        }
    }
}

/// `(R_i - mean) / std` with population std; all zeros for a constant group.
pub fn group_relative(rewards: &[f64]) -> Result<Vec<f64>> {
    Ok(RewardGroup::new(rewards)?.group_relative(StdMode::Population))
}

/// `R_i` minus the mean of the other `K - 1` rewards.
pub fn leave_one_out(rewards: &[f64]) -> Result<Vec<f64>> {
    Ok(RewardGroup::new(rewards)?.leave_one_out())
}

/// Repeats each response's advantage once per token.
pub fn broadcast_to_tokens(advantages: &[f64], lengths: &[usize]) -> Result<Vec<f64>> {
    if advantages.len() != lengths.len() {
        return Err(Error::domain(format!(
            "{} advantages but {} response lengths",
            advantages.len(),
            lengths.len()
        )));
    }
    if lengths.contains(&0) {
        return Err(Error::domain("response lengths must be at least 1"));
    }
    let mut out = Vec::with_capacity(lengths.iter().sum());
    for (&a, &len) in advantages.iter().zip(lengths) {
        out.extend(std::iter::repeat_n(a, len));
    }
    Ok(out)
}
