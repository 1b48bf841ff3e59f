#![allow(dead_code)]

use cfpo_core::advantages::AdvantageEstimator;
use cfpo_core::envs::EnvSpec;
use cfpo_core::objectives::{ObjectiveConfig, ObjectiveKind};
use cfpo_core::policy::{PolicyParams, PolicySpec};
use cfpo_core::rng::{Purpose, StreamRng, Streams};
use cfpo_core::trainer::TrainConfig;
use rand::Rng;

pub fn rng(seed: u64) -> StreamRng {
    Streams::new(seed).stream(Purpose::Check, &[999])
}

/// Relative error with magnitudes floored at 1e-3, so near-zero derivatives are
/// compared in absolute terms.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn small_config(kind: ObjectiveKind) -> TrainConfig {
    TrainConfig {
        objective: ObjectiveConfig::new(kind, 0.2),
        env: EnvSpec::verifiable(vec![1, 2, 3], 5),
        policy: PolicySpec::new(5, 3, 4),
        batch_size: 4,
        group_size: 3,
        iterations: 1,
        minibatch_size: None,
        learning_rate: 1.0,
        steps: 3,
        seed: 7,
        advantage_estimator: AdvantageEstimator::GroupRelative,
        temperature: 1.0,
    }
}

pub fn random_params(spec: PolicySpec, scale: f64, rng: &mut StreamRng) -> PolicyParams {
    let mut p = PolicyParams::zeros(spec);
    for x in p.theta_mut() {
        *x = rng.random_range(-scale..scale);
    }
    p
}
