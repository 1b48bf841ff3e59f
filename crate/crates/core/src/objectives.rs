//! Per-token surrogate objectives and their closed-form derivatives in the
//! probability ratio `r = π_θ / π_old`.
//!
//! Both surrogates are written in maximisation form; [`token_loss`] flips the sign
//! so the trainer can minimise.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest tolerated `logp_ref - logp_cur` before the KL estimator is treated as divergent.
pub const KL_LOG_GAP_LIMIT: f64 = 50.0;

/// Slack allowed on the `logp <= 0` invariant of discrete log-probabilities.
const LOGP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Clip,
    Cfpo,
}

impl ObjectiveKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectiveKind::Clip => "clip",
            ObjectiveKind::Cfpo => "cfpo",
        }
    }
}

impl std::fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How token losses are weighted inside a mini-batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Average tokens within each response, then average responses.
    #[default]
    PerSequenceMean,
    /// Average over every token in the mini-batch.
    TokenLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Lower clip width; defaults to `eps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_low: Option<f64>,
    /// Upper clip width; defaults to `eps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_high: Option<f64>,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub aggregation: Aggregation,
}

fn default_eps() -> f64 {
    0.2
}

impl ObjectiveConfig {
    pub fn new(kind: ObjectiveKind, eps: f64) -> Self {
        Self {
            kind,
            eps,
            eps_low: None,
            eps_high: None,
            beta: 0.0,
            aggregation: Aggregation::PerSequenceMean,
        }
    }

    pub fn eps_low(&self) -> f64 {
        self.eps_low.unwrap_or(self.eps)
    }

    pub fn eps_high(&self) -> f64 {
        self.eps_high.unwrap_or(self.eps)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "objective.{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("eps", self.eps)?;
        positive("eps_low", self.eps_low())?;
        positive("eps_high", self.eps_high())?;
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Config(format!(
                "objective.beta must be nonnegative and finite, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// One token's inputs to the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenSample {
    pub ratio: f64,
    pub advantage: f64,
    pub logp_cur: f64,
    pub logp_ref: f64,
}

impl TokenSample {
    pub fn validate(&self) -> Result<()> {
        check_ratio(self.ratio)?;
        if !self.advantage.is_finite() {
            return Err(Error::domain(format!(
                "advantage must be finite, got {}",
                self.advantage
            )));
        }
        for (name, lp) in [("logp_cur", self.logp_cur), ("logp_ref", self.logp_ref)] {
            if !lp.is_finite() || lp > LOGP_SLACK {
                return Err(Error::domain(format!(
                    "{name} must be a finite log-probability, got {lp}"
                )));
            }
        }
        Ok(())
    }
}

fn check_ratio(r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "ratio must be positive and finite, got {r}"
        )))
    }
}

fn check_width(name: &str, eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{name} must be positive and finite, got {eps}"
        )))
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite, got {v}")))
    }
}

/// `min(r·A, clamp(r, 1-eps_low, 1+eps_high)·A)`.
pub fn clip_surrogate(r: f64, advantage: f64, eps_low: f64, eps_high: f64) -> Result<f64> {
    check_ratio(r)?;
    check_finite("advantage", advantage)?;
    check_width("eps_low", eps_low)?;
    check_width("eps_high", eps_high)?;
    let clamped = r.clamp(1.0 - eps_low, 1.0 + eps_high);
    Ok((r * advantage).min(clamped * advantage))
}

/// Derivative of [`clip_surrogate`] in `r`.
///
/// The objective is flat (derivative 0) for `r > 1+eps_high` with `A > 0` and for
/// `r < 1-eps_low` with `A < 0`; elsewhere it is `A`. Exactly at a boundary the
/// inner branch derivative `A` is returned.
pub fn clip_surrogate_grad_r(r: f64, advantage: f64, eps_low: f64, eps_high: f64) -> Result<f64> {
    check_ratio(r)?;
    check_finite("advantage", advantage)?;
    check_width("eps_low", eps_low)?;
    check_width("eps_high", eps_high)?;
    let flat = (advantage > 0.0 && r > 1.0 + eps_high) || (advantage < 0.0 && r < 1.0 - eps_low);
    Ok(if flat { 0.0 } else { advantage })
}

/// `r·A - |A|/(2·eps)·(r-1)²`.
pub fn cfpo_surrogate(r: f64, advantage: f64, eps: f64) -> Result<f64> {
    check_ratio(r)?;
    check_finite("advantage", advantage)?;
    check_width("eps", eps)?;
    let d = r - 1.0;
    Ok(r * advantage - advantage.abs() / (2.0 * eps) * d * d)
}

/// `A - |A|/eps·(r-1)`; zero at `r = 1 + sign(A)·eps`.
pub fn cfpo_surrogate_grad_r(r: f64, advantage: f64, eps: f64) -> Result<f64> {
    check_ratio(r)?;
    check_finite("advantage", advantage)?;
    check_width("eps", eps)?;
    Ok(advantage - advantage.abs() / eps * (r - 1.0))
}

/// Value and `logp_cur`-derivative of the per-token KL estimator
/// `exp(Δ) - Δ - 1` with `Δ = logp_ref - logp_cur`.
pub fn kl_ref_penalty(logp_cur: f64, logp_ref: f64) -> Result<(f64, f64)> {
    check_finite("logp_cur", logp_cur)?;
    check_finite("logp_ref", logp_ref)?;
    let gap = logp_ref - logp_cur;
    if gap > KL_LOG_GAP_LIMIT {
        return Err(Error::KlOverflow(gap));
    }
    let e = gap.exp();
    // exp_m1 keeps the value nonnegative and accurate near gap = 0.
    let value = (gap.exp_m1() - gap).max(0.0);
    Ok((value, 1.0 - e))
}

/// Loss pieces for a single token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenLoss {
    pub value: f64,
    /// ∂value/∂r from the surrogate term.
    pub grad_wrt_ratio: f64,
    /// ∂value/∂logp_cur from the β-weighted KL term.
    pub grad_wrt_logp_cur_from_kl: f64,
}

/// `-surrogate(r, A) + β·kl(logp_cur, logp_ref)` for the configured objective.
pub fn token_loss(sample: &TokenSample, cfg: &ObjectiveConfig) -> Result<TokenLoss> {
    sample.validate()?;
    let TokenSample {
        ratio: r,
        advantage: a,
        ..
    } = *sample;
    let (surrogate, d_surrogate) = match cfg.kind {
        ObjectiveKind::Clip => (
            clip_surrogate(r, a, cfg.eps_low(), cfg.eps_high())?,
            clip_surrogate_grad_r(r, a, cfg.eps_low(), cfg.eps_high())?,
        ),
        ObjectiveKind::Cfpo => (
            cfpo_surrogate(r, a, cfg.eps)?,
            cfpo_surrogate_grad_r(r, a, cfg.eps)?,
        ),
    };
    let (kl_value, kl_grad) = if cfg.beta > 0.0 {
        let (v, g) = kl_ref_penalty(sample.logp_cur, sample.logp_ref)?;
        (cfg.beta * v, cfg.beta * g)
    } else {
        (0.0, 0.0)
    };
    Ok(TokenLoss {
        value: -surrogate + kl_value,
        grad_wrt_ratio: -d_surrogate,
        grad_wrt_logp_cur_from_kl: kl_grad,
    })
}
