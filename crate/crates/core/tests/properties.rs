mod common;

use cfpo_core::advantages::{group_relative, leave_one_out, RewardGroup, StdMode};
use cfpo_core::objectives::{cfpo_surrogate, cfpo_surrogate_grad_r, clip_surrogate_grad_r};
use cfpo_core::policy::{
    entropy, log_prob, policy_kl, response_states, sample_response, softmax, state_index,
    PolicyParams, PolicySpec,
};
use cfpo_core::rng::{Purpose, Streams};
use cfpo_core::theory::{golden_section_max, kl_divergence, tv_distance, Simplex};
use proptest::prelude::*;

fn population_stats(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn rewards() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 2..16)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn group_relative_is_standardised(r in rewards()) {
        let max = r.iter().cloned().fold(f64::MIN, f64::max);
        let min = r.iter().cloned().fold(f64::MAX, f64::min);
        prop_assume!(max - min > 1e-6);
        let a = group_relative(&r).unwrap();
        let (mean, std) = population_stats(&a);
        prop_assert!(mean.abs() <= 1e-9);
        prop_assert!((std - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn group_relative_preserves_order(r in rewards()) {
        let a = group_relative(&r).unwrap();
        for i in 0..r.len() {
            for j in 0..r.len() {
                if r[i] < r[j] {
                    prop_assert!(a[i] < a[j]);
                }
            }
        }
    }

    #[test]
    fn sample_std_scales_population_result(r in rewards()) {
        let max = r.iter().cloned().fold(f64::MIN, f64::max);
        let min = r.iter().cloned().fold(f64::MAX, f64::min);
        prop_assume!(max - min > 1e-6);
        let g = RewardGroup::new(&r).unwrap();
        let pop = g.group_relative(StdMode::Population);
        let sample = g.group_relative(StdMode::Sample);
        let n = r.len() as f64;
        let k = ((n - 1.0) / n).sqrt();
        for (p, s) in pop.iter().zip(&sample) {
            prop_assert!((s - p * k).abs() <= 1e-9 * p.abs().max(1.0));
        }
    }

    #[test]
    fn leave_one_out_sums_to_zero(r in rewards()) {
        let a = leave_one_out(&r).unwrap();
        let scale = r.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        prop_assert!(a.iter().sum::<f64>().abs() <= 1e-9 * scale);
    }

    #[test]
    fn leave_one_out_matches_definition(r in rewards()) {
        let a = leave_one_out(&r).unwrap();
        let k = r.len();
        for i in 0..k {
            let others = (r.iter().sum::<f64>() - r[i]) / (k - 1) as f64;
            prop_assert!((a[i] - (r[i] - others)).abs() <= 1e-9 * (1.0 + r[i].abs()));
        }
    }

    #[test]
    fn constant_groups_give_zero(c in -10.0f64..10.0, k in 2usize..16) {
        let r = vec![c; k];
        prop_assert!(group_relative(&r).unwrap().iter().all(|&x| x == 0.0));
        prop_assert!(leave_one_out(&r).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn shift_invariance(r in rewards(), shift in -5.0f64..5.0) {
        let shifted: Vec<f64> = r.iter().map(|x| x + shift).collect();
        for (a, b) in leave_one_out(&r).unwrap().iter().zip(leave_one_out(&shifted).unwrap()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn softmax_is_a_distribution(row in prop::collection::vec(-30.0f64..30.0, 2..12)) {
        let p = softmax(&row);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn entropy_is_bounded(v in 2usize..10, seed in any::<u64>(), scale in 0.0f64..20.0) {
        let spec = PolicySpec::new(v, 1, 2);
        let params = common::random_params(spec, scale.max(1e-9), &mut Streams::new(seed).stream(Purpose::Check, &[0]));
        let s = state_index(&spec, 0, 0, 0).unwrap();
        let h = entropy(&params, &s);
        prop_assert!(h >= 0.0);
        prop_assert!(h <= (v as f64).ln() + 1e-12);
    }

    #[test]
    fn policy_kl_is_nonnegative_and_zero_on_self(seed in any::<u64>()) {
        let spec = PolicySpec::new(4, 2, 3);
        let mut rng = Streams::new(seed).stream(Purpose::Check, &[1]);
        let a = common::random_params(spec, 2.0, &mut rng);
        let b = common::random_params(spec, 2.0, &mut rng);
        let states: Vec<_> = (0..4).map(|t| state_index(&spec, 1, t, 0).unwrap()).collect();
        prop_assert!(policy_kl(&a, &b, &states).unwrap() >= -1e-12);
        prop_assert!(policy_kl(&a, &a, &states).unwrap().abs() <= 1e-12);
    }

    /// Stored log-probabilities are the generator's, so the ratio against the
    /// generating parameters is exactly 1.
    #[test]
    fn sampled_logps_match_generator(seed in any::<u64>(), temp in 0.3f64..3.0) {
        let spec = PolicySpec::new(5, 3, 6);
        let mut rng = Streams::new(seed).stream(Purpose::Response, &[0]);
        let params = common::random_params(spec, 2.0, &mut rng);
        let resp = sample_response(&params, 2, &mut rng, temp).unwrap();
        let states = response_states(&spec, 2, &resp.tokens).unwrap();
        for ((s, &t), &lp) in states.iter().zip(&resp.tokens).zip(&resp.logps) {
            prop_assert!((log_prob(&params, s, t) - lp).abs() <= 1e-12);
            prop_assert_eq!((log_prob(&params, s, t) - lp).exp(), 1.0);
        }
    }

    #[test]
    fn pinsker_bridge(dim in 2usize..9, seed in any::<u64>(), lambda in 0.0f64..1.0) {
        let mut rng = Streams::new(seed).stream(Purpose::Check, &[2]);
        let p = Simplex::sample(dim, &mut rng);
        let q = p.mix(&Simplex::sample(dim, &mut rng), lambda);
        let tv = tv_distance(&p, &q).unwrap();
        let kl = kl_divergence(&p, &q).unwrap();
        prop_assert!(tv <= (kl / 2.0).sqrt() + 1e-12);
        prop_assert!((0.0..=1.0).contains(&tv));
    }

    #[test]
    fn clip_flat_beyond_boundary_cfpo_restores(eps in 0.01f64..1.0, a in 0.01f64..5.0, excess in 1e-6f64..2.0) {
        let up = 1.0 + eps + excess;
        prop_assert_eq!(clip_surrogate_grad_r(up, a, eps, eps).unwrap(), 0.0);
        prop_assert!(cfpo_surrogate_grad_r(up, a, eps).unwrap() < 0.0);
        let down = (1.0 - eps - excess * (1.0 - eps)).max(1e-9);
        prop_assume!(down < 1.0 - eps);
        prop_assert_eq!(clip_surrogate_grad_r(down, -a, eps, eps).unwrap(), 0.0);
        prop_assert!(cfpo_surrogate_grad_r(down, -a, eps).unwrap() > 0.0);
    }

    #[test]
    fn cfpo_maximiser_is_eps_aligned(eps in 0.01f64..1.0, a in 0.01f64..5.0, neg in any::<bool>()) {
        let a = if neg { -a } else { a };
        let r = golden_section_max(|r| cfpo_surrogate(r, a, eps).unwrap(), 1e-12, 3.0, 1e-10);
        prop_assert!((r - (1.0 + a.signum() * eps)).abs() <= 1e-6);
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>()) {
        let spec = PolicySpec::new(4, 2, 3);
        let params = common::random_params(spec, 5.0, &mut Streams::new(seed).stream(Purpose::Check, &[3]));
        let back = PolicyParams::from_csv_str(&params.to_csv_string()).unwrap();
        prop_assert_eq!(back, params);
    }
}
