//! Analytic derivatives against central finite differences.

mod common;

use cfpo_core::objectives::{
    cfpo_surrogate, cfpo_surrogate_grad_r, clip_surrogate, clip_surrogate_grad_r, kl_ref_penalty,
    token_loss, Aggregation, ObjectiveConfig, ObjectiveKind, TokenSample,
};
use cfpo_core::policy::{log_prob, log_prob_grad, state_index, PolicySpec};
use cfpo_core::rng::Streams;
use cfpo_core::trainer::{compute_advantages, rollout, surrogate_gradient, surrogate_loss};
use common::{central_diff, random_params, rel_err, rng, small_config};
use rand::Rng;

const TOL: f64 = 1e-5;
const H: f64 = 1e-6;

fn nonzero_advantage(rng: &mut impl Rng) -> f64 {
    let a: f64 = rng.random_range(0.05..3.0);
    if rng.random_bool(0.5) {
        a
    } else {
        -a
    }
}

#[test]
fn clip_surrogate_derivative() {
    let mut rng = rng(1);
    let mut checked = 0;
    while checked < 1000 {
        let r: f64 = rng.random_range(0.05..3.0);
        let a = nonzero_advantage(&mut rng);
        let (lo, hi) = (rng.random_range(0.05..0.5), rng.random_range(0.05..0.5));
        // the function is piecewise linear; stay off its kinks
        if (r - (1.0 - lo)).abs() < 1e-3 || (r - (1.0 + hi)).abs() < 1e-3 {
            continue;
        }
        let fd = central_diff(|x| clip_surrogate(x, a, lo, hi).unwrap(), r, H);
        let g = clip_surrogate_grad_r(r, a, lo, hi).unwrap();
        assert!(
            rel_err(g, fd) <= TOL,
            "r={r} a={a} lo={lo} hi={hi}: {g} vs {fd}"
        );
        checked += 1;
    }
}

#[test]
fn cfpo_surrogate_derivative() {
    let mut rng = rng(2);
    for _ in 0..1000 {
        let r: f64 = rng.random_range(0.05..3.0);
        let a = nonzero_advantage(&mut rng);
        let eps = rng.random_range(0.01..1.0);
        let fd = central_diff(|x| cfpo_surrogate(x, a, eps).unwrap(), r, H);
        let g = cfpo_surrogate_grad_r(r, a, eps).unwrap();
        assert!(rel_err(g, fd) <= TOL, "r={r} a={a} eps={eps}: {g} vs {fd}");
    }
}

#[test]
fn kl_penalty_derivative() {
    let mut rng = rng(3);
    for _ in 0..1000 {
        let cur: f64 = rng.random_range(-6.0..-0.01);
        let refp: f64 = rng.random_range(-6.0..-0.01);
        let fd = central_diff(|x| kl_ref_penalty(x, refp).unwrap().0, cur, H);
        let g = kl_ref_penalty(cur, refp).unwrap().1;
        assert!(rel_err(g, fd) <= TOL, "cur={cur} ref={refp}: {g} vs {fd}");
    }
}

#[test]
fn token_loss_derivatives() {
    let mut rng = rng(4);
    for k in 0..1000 {
        let kind = if k % 2 == 0 {
            ObjectiveKind::Cfpo
        } else {
            ObjectiveKind::Clip
        };
        let mut cfg = ObjectiveConfig::new(kind, 0.2);
        cfg.beta = 0.1;
        let s = TokenSample {
            ratio: rng.random_range(0.5..1.6),
            advantage: nonzero_advantage(&mut rng),
            logp_cur: rng.random_range(-4.0..-0.1),
            logp_ref: rng.random_range(-4.0..-0.1),
        };
        if (s.ratio - 0.8).abs() < 1e-3 || (s.ratio - 1.2).abs() < 1e-3 {
            continue;
        }
        let l = token_loss(&s, &cfg).unwrap();
        let fd_r = central_diff(
            |x| {
                token_loss(&TokenSample { ratio: x, ..s }, &cfg)
                    .unwrap()
                    .value
            },
            s.ratio,
            H,
        );
        let fd_lp = central_diff(
            |x| {
                token_loss(&TokenSample { logp_cur: x, ..s }, &cfg)
                    .unwrap()
                    .value
            },
            s.logp_cur,
            H,
        );
        assert!(rel_err(l.grad_wrt_ratio, fd_r) <= TOL, "{s:?}");
        assert!(rel_err(l.grad_wrt_logp_cur_from_kl, fd_lp) <= TOL, "{s:?}");
    }
}

#[test]
fn log_prob_derivative() {
    let mut rng = rng(5);
    let mut checked = 0;
    for trial in 0..100 {
        let v = rng.random_range(2..9);
        let spec = PolicySpec::new(v, 2, 3);
        let params = random_params(spec, 3.0, &mut rng);
        let state = state_index(&spec, trial % 2, rng.random_range(0..v), 1).unwrap();
        let tok = rng.random_range(0..v);
        let g = log_prob_grad(&params, &state, tok);
        assert_eq!(g.row, state.row(&spec));
        for (j, &gj) in g.values.iter().enumerate() {
            let idx = g.row * v + j;
            let f = |x: f64| {
                let mut p = params.clone();
                p.theta_mut()[idx] = x;
                log_prob(&p, &state, tok)
            };
            let fd = central_diff(f, params.theta()[idx], H);
            assert!(rel_err(gj, fd) <= TOL, "v={v} j={j}: {gj} vs {fd}");
            checked += 1;
        }
    }
    assert!(checked >= 200);
}

/// Full mini-batch loss for every objective and aggregation, on parameters moved
/// away from the rollout snapshot so ratios are off 1.
#[test]
fn batch_loss_gradient() {
    let mut rng = rng(6);
    let mut checked = 0;
    for kind in [ObjectiveKind::Clip, ObjectiveKind::Cfpo] {
        for aggregation in [Aggregation::PerSequenceMean, Aggregation::TokenLevel] {
            for beta in [0.0, 0.05] {
                let mut cfg = small_config(kind);
                cfg.objective.aggregation = aggregation;
                cfg.objective.beta = beta;
                let snapshot = random_params(cfg.policy, 1.0, &mut rng);
                let reference = random_params(cfg.policy, 1.0, &mut rng);
                let streams = Streams::new(rng.random());
                let mut batch = rollout(&snapshot, &reference, &cfg, &streams, 0).unwrap();
                compute_advantages(&mut batch, cfg.advantage_estimator).unwrap();
                let mut params = snapshot.clone();
                for x in params.theta_mut() {
                    *x += rng.random_range(-0.3..0.3);
                }
                let idx: Vec<usize> = (0..batch.len()).collect();
                let g = surrogate_gradient(&params, &batch, &idx, &cfg.objective).unwrap();
                let loss = surrogate_loss(&params, &batch, &idx, &cfg.objective).unwrap();
                assert_eq!(g.loss, loss);
                for _ in 0..100 {
                    let c = rng.random_range(0..params.theta().len());
                    let f = |x: f64| {
                        let mut p = params.clone();
                        p.theta_mut()[c] = x;
                        surrogate_loss(&p, &batch, &idx, &cfg.objective).unwrap()
                    };
                    let fd = central_diff(f, params.theta()[c], H);
                    assert!(
                        rel_err(g.grad[c], fd) <= TOL,
                        "{kind} {aggregation:?} beta={beta} coord {c}: {} vs {fd}",
                        g.grad[c]
                    );
                    checked += 1;
                }
            }
        }
    }
    assert_eq!(checked, 800);
}

#[test]
fn batch_loss_gradient_twenty_coordinates() {
    let mut rng = rng(7);
    let cfg = small_config(ObjectiveKind::Cfpo);
    let snapshot = random_params(cfg.policy, 0.5, &mut rng);
    let streams = Streams::new(11);
    let mut batch = rollout(&snapshot, &snapshot, &cfg, &streams, 0).unwrap();
    compute_advantages(&mut batch, cfg.advantage_estimator).unwrap();
    let mut params = snapshot.clone();
    params
        .theta_mut()
        .iter_mut()
        .for_each(|x| *x += rng.random_range(-0.2..0.2));
    let idx: Vec<usize> = (0..batch.len()).collect();
    let g = surrogate_gradient(&params, &batch, &idx, &cfg.objective).unwrap();
    for _ in 0..20 {
        let c = rng.random_range(0..params.theta().len());
        let fd = central_diff(
            |x| {
                let mut p = params.clone();
                p.theta_mut()[c] = x;
                surrogate_loss(&p, &batch, &idx, &cfg.objective).unwrap()
            },
            params.theta()[c],
            H,
        );
        assert!(rel_err(g.grad[c], fd) <= TOL);
    }
}
