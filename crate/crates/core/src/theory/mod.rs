//! Numerical verification of the trust-region theory behind the clipping-free
//! surrogate: Pinsker's inequality and KL ⊂ TV containment, the ε-aligned maximiser,
//! the TV performance-improvement lower bound on tiny MDPs, and the ordering of the
//! TV- and KL-constrained bound maxima.

mod checks;
mod mdp;

use std::time::Instant;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use checks::{
    check_bound_ordering, check_eps_aligned, check_eps_aligned_with, check_improvement_bound,
    check_pinsker, check_prop1, golden_section_max, ppo as clipped_surrogate,
    spo as clipping_free_surrogate, BoundOrdering, Surrogate,
};
pub use mdp::{exact_eval, improvement_bound_terms, BoundTerms, PolicyEvaluation, TinyMdp};

const SIMPLEX_TOL: f64 = 1e-12;

/// A probability vector of dimension at least 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex(Vec<f64>);

impl Simplex {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::domain(format!(
                "simplex needs dimension >= 2, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::domain(
                "simplex entries must be finite and nonnegative",
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::domain(format!("simplex entries sum to {sum}")));
        }
        Ok(Self(probs))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    /// Symmetric Dirichlet(1) draw: uniform on the simplex.
    pub fn sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let z: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= z);
        Self(v)
    }

    /// `(1-λ)·self + λ·other`.
    pub fn mix(&self, other: &Simplex, lambda: f64) -> Simplex {
        Simplex(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
                .collect(),
        )
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

fn same_dim(p: &Simplex, q: &Simplex) -> Result<()> {
    if p.dim() == q.dim() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "dimension mismatch: {} vs {}",
            p.dim(),
            q.dim()
        )))
    }
}

/// `½ Σ |p_i - q_i|`.
pub fn tv_distance(p: &Simplex, q: &Simplex) -> Result<f64> {
    same_dim(p, q)?;
    Ok(0.5
        * p.0
            .iter()
            .zip(&q.0)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// `(1+d)·ln(1+d) - d`, by series near 0 to keep relative accuracy.
fn bregman_term(d: f64) -> f64 {
    if d.abs() < 1e-2 {
        let mut sum = 0.0;
        let mut pow = d * d;
        for k in 2..=12 {
            let kf = k as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * pow / (kf * (kf - 1.0));
            pow *= d;
        }
        sum
    } else {
        (1.0 + d) * d.ln_1p() - d
    }
}

/// `Σ p_i log(p_i / q_i)` with `0 log 0 = 0`; `+∞` when `p` is not absolutely
/// continuous with respect to `q`. Summed as `Σ q_i·φ(p_i/q_i)` with
/// `φ(x) = x ln x - x + 1 >= 0`, which equals the plain sum on the simplex and keeps
/// near-identical pairs accurate to relative precision.
pub fn kl_divergence(p: &Simplex, q: &Simplex) -> Result<f64> {
    same_dim(p, q)?;
    let mut kl = 0.0;
    for (&a, &b) in p.0.iter().zip(&q.0) {
        if b == 0.0 {
            if a > 0.0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        kl += if a == 0.0 {
            b
        } else {
            b * bregman_term((a - b) / b)
        };
    }
    Ok(kl.max(0.0))
}

/// Outcome of one numerical check, serialised into `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub trials: usize,
    pub violations: usize,
    /// Largest `(checked side - bound)` seen; a violation is a value above tolerance.
    pub max_slack: f64,
    pub wall_time_ms: f64,
    #[serde(flatten)]
    pub details: serde_json::Map<String, serde_json::Value>,
}

impl CheckReport {
    pub(crate) fn new(name: impl Into<String>) -> Self {
        Self {
            check_name: name.into(),
            trials: 0,
            violations: 0,
            max_slack: f64::NEG_INFINITY,
            wall_time_ms: 0.0,
            details: serde_json::Map::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub(crate) fn record(&mut self, slack: f64, tol: f64) {
        self.trials += 1;
        if slack > self.max_slack || self.max_slack.is_nan() {
            self.max_slack = slack;
        }
        if !(slack <= tol) {
            self.violations += 1;
        }
    }

    pub(crate) fn detail(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.details.insert(key.to_string(), value.into());
    }

    pub(crate) fn finish(mut self, started: Instant) -> Self {
        self.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
        if self.trials == 0 {
            self.max_slack = 0.0;
        }
        self
    }
}
