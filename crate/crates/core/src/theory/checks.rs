use std::time::Instant;

use rand::Rng;

use super::mdp::{exact_eval, improvement_bound_terms, TinyMdp};
use super::{kl_divergence, tv_distance, CheckReport, Simplex};
use crate::objectives::{cfpo_surrogate, clip_surrogate};
use crate::{Error, Result};

const PINSKER_TOL: f64 = 1e-12;
const ARGMAX_TOL: f64 = 1e-6;
const BOUND_TOL: f64 = 1e-9;
const ORDERING_TOL: f64 = 1e-6;
/// Search interval for the surrogate maximiser; the ratio is positive.
const R_MIN: f64 = 1e-12;
const R_MAX: f64 = 3.0;
/// Upper limit on joint simplex-grid candidates in [`check_bound_ordering`].
const MAX_GRID_POINTS: usize = 20_000_000;

/// Surrogate `f(r, A, ε)` used by the ε-aligned check.
pub type Surrogate = fn(f64, f64, f64) -> f64;

/// The clipping-free surrogate as a [`Surrogate`].
pub fn spo(r: f64, a: f64, eps: f64) -> f64 {
    cfpo_surrogate(r, a, eps).expect("cfpo surrogate inputs are in range")
}

/// The symmetric clipped surrogate as a [`Surrogate`].
pub fn ppo(r: f64, a: f64, eps: f64) -> f64 {
    clip_surrogate(r, a, eps, eps).expect("clip surrogate inputs are in range")
}

/// Pairs sitting at simplex corners, where Pinsker is closest to tight for skewed masses.
fn corner_pairs(dim: usize) -> Vec<(Simplex, Simplex)> {
    let mut out = Vec::new();
    for k in [1e-3, 1e-6, 1e-9, 1e-12] {
        let mut p = vec![k / (dim - 1) as f64; dim];
        p[0] = 1.0 - k;
        let p = Simplex(p);
        let uniform = Simplex::uniform(dim).expect("dim >= 2");
        out.push((p.clone(), uniform.clone()));
        out.push((uniform, p.clone()));
        let mut q = vec![0.0; dim];
        q[0] = 0.5;
        q[1] = 0.5;
        out.push((p.clone(), Simplex(q)));
        let mut near = p.probs().to_vec();
        near[0] -= k / 2.0;
        near[1] += k / 2.0;
        out.push((p, Simplex(near)));
    }
    out
}

/// Samples random pairs (plus deterministic corner pairs) and checks
/// `TV(p, q) <= sqrt(KL(p‖q) / 2)`.
pub fn check_pinsker<R: Rng + ?Sized>(
    trials: usize,
    dim: usize,
    rng: &mut R,
) -> Result<CheckReport> {
    if trials == 0 || dim < 2 {
        return Err(Error::domain(
            "check_pinsker needs trials >= 1 and dim >= 2",
        ));
    }
    let started = Instant::now();
    let mut report = CheckReport::new("check_pinsker");
    let mut check = |p: &Simplex, q: &Simplex| -> Result<()> {
        let tv = tv_distance(p, q)?;
        let bound = (kl_divergence(p, q)? / 2.0).sqrt();
        report.record(tv - bound, PINSKER_TOL);
        Ok(())
    };
    for _ in 0..trials {
        let p = Simplex::sample(dim, rng);
        let q = if rng.random_bool(0.5) {
            Simplex::sample(dim, rng)
        } else {
            // nearby pair: Pinsker is tightest for small divergences
            let other = Simplex::sample(dim, rng);
            let lambda = rng.random::<f64>().powi(4);
            p.mix(&other, lambda)
        };
        check(&p, &q)?;
    }
    for (p, q) in corner_pairs(dim) {
        check(&p, &q)?;
    }
    report.detail("dim", dim);
    Ok(report.finish(started))
}

/// Largest `λ ∈ [0, 1]` with `KL(p ‖ (1-λ)p + λq) <= delta` (the KL is increasing in λ).
fn kl_feasible_lambda(p: &Simplex, q: &Simplex, delta: f64) -> Result<f64> {
    if kl_divergence(p, &p.mix(q, 1.0))? <= delta {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if kl_divergence(p, &p.mix(q, mid))? <= delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Binary pair `p = (½, ½, 0…)` against `q = (½ + x, ½ - x, 0…)` with `x` pushed to
/// the KL budget; its TV sits just under `sqrt(delta_kl / 2)`.
fn near_tight_pair(dim: usize, delta_kl: f64) -> Result<(Simplex, Simplex)> {
    let build = |x: f64| {
        let mut p = vec![0.0; dim];
        let mut q = vec![0.0; dim];
        p[0] = 0.5;
        p[1] = 0.5;
        q[0] = 0.5 + x;
        q[1] = 0.5 - x;
        (Simplex(p), Simplex(q))
    };
    let (mut lo, mut hi) = (0.0, 0.5);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let (p, q) = build(mid);
        if kl_divergence(&p, &q)? <= delta_kl {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(build(lo))
}

/// KL-ball ⊂ TV-ball containment. Every sampled pair is pulled inside the KL budget
/// along the segment toward `p`, then its TV is compared with `delta_tv` (default
/// `sqrt(delta_kl / 2)`). With `delta_tv` below that threshold containment is not
/// guaranteed; the report then flags the configuration and records whether a
/// counterexample to containment was found.
pub fn check_prop1<R: Rng + ?Sized>(
    delta_kl: f64,
    delta_tv: Option<f64>,
    trials: usize,
    dim: usize,
    rng: &mut R,
) -> Result<CheckReport> {
    if !(delta_kl > 0.0) || trials == 0 || dim < 2 {
        return Err(Error::domain(
            "check_prop1 needs delta_kl > 0, trials >= 1, dim >= 2",
        ));
    }
    let threshold = (delta_kl / 2.0).sqrt();
    let delta_tv = delta_tv.unwrap_or(threshold);
    let hypothesis = delta_tv >= threshold;
    let started = Instant::now();
    let mut report = CheckReport::new("check_prop1");
    let mut feasible = 0usize;
    let mut outside_tv = 0usize;

    let mut pairs = Vec::with_capacity(trials + 2);
    let p0 = Simplex::sample(dim, rng);
    pairs.push((p0.clone(), p0));
    pairs.push(near_tight_pair(dim, delta_kl)?);
    for _ in 0..trials {
        let p = Simplex::sample(dim, rng);
        let other = Simplex::sample(dim, rng);
        let lambda_max = kl_feasible_lambda(&p, &other, delta_kl)?;
        // half the draws sit on the KL boundary, the rest strictly inside
        let u: f64 = if rng.random_bool(0.5) {
            1.0
        } else {
            rng.random()
        };
        let q = p.mix(&other, u * lambda_max);
        pairs.push((p, q));
    }
    for (p, q) in &pairs {
        if kl_divergence(p, q)? > delta_kl {
            continue;
        }
        feasible += 1;
        let tv = tv_distance(p, q)?;
        if tv > delta_tv {
            outside_tv += 1;
        }
        if hypothesis {
            report.record(tv - delta_tv, 0.0);
        } else {
            report.trials += 1;
            report.max_slack = report.max_slack.max(tv - delta_tv);
        }
    }
    report.detail("delta_kl", delta_kl);
    report.detail("delta_tv", delta_tv);
    report.detail("hypothesis_satisfied", hypothesis);
    report.detail("kl_feasible_pairs", feasible);
    report.detail("tv_infeasible_pairs", outside_tv);
    if !hypothesis {
        report.detail("outside_hypothesis", true);
        report.detail("counterexample_found", outside_tv > 0);
    }
    Ok(report.finish(started))
}

/// Golden-section search for the maximiser of a unimodal `f` on `[lo, hi]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// The ε-aligned property with the crate's own surrogates.
pub fn check_eps_aligned<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> Result<CheckReport> {
    check_eps_aligned_with(trials, rng, spo, ppo)
}

/// For random `A ≠ 0` and `ε ∈ (0, 1]`, the maximiser of `penalty` over `r ∈ (0, 3]`
/// must be `1 + sign(A)·ε` within 1e-6, and `clipped` must be flat beyond the
/// boundary (`f(1+ε) = f(1+2ε)` for `A > 0`), so its maximiser is not unique.
pub fn check_eps_aligned_with<R: Rng + ?Sized>(
    trials: usize,
    rng: &mut R,
    penalty: Surrogate,
    clipped: Surrogate,
) -> Result<CheckReport> {
    if trials == 0 {
        return Err(Error::domain("check_eps_aligned needs trials >= 1"));
    }
    let started = Instant::now();
    let mut report = CheckReport::new("check_eps_aligned");
    let mut worst = 0.0f64;
    let mut ppo_flat = 0usize;
    let fixed = [(1.0, 0.2), (-1.0, 0.2)];
    for k in 0..trials + fixed.len() {
        let (a, eps) = if k < fixed.len() {
            fixed[k]
        } else {
            let mag = 10f64.powf(rng.random_range(-3.0..3.0));
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            (sign * mag, 1.0 - rng.random::<f64>())
        };
        let target = 1.0 + a.signum() * eps;
        let argmax = golden_section_max(|r| penalty(r, a, eps), R_MIN, R_MAX, 1e-10);
        let err = (argmax - target).abs();
        worst = worst.max(err);
        report.record(err - ARGMAX_TOL, 0.0);

        let (pa, pe) = (a.abs(), eps);
        let flat = clipped(1.0 + pe, pa, pe) == clipped(1.0 + 2.0 * pe, pa, pe);
        if flat {
            ppo_flat += 1;
        } else {
            report.violations += 1;
        }
    }
    report.detail("max_argmax_error", worst);
    report.detail("ppo_flat_confirmations", ppo_flat);
    report.detail("tolerance", ARGMAX_TOL);
    Ok(report.finish(started))
}

fn random_policy<R: Rng + ?Sized>(mdp: &TinyMdp, rng: &mut R) -> Vec<Simplex> {
    (0..mdp.num_states())
        .map(|_| Simplex::sample(mdp.num_actions(), rng))
        .collect()
}

/// Checks `η(π̃) - η(π) >= RHS` (TV form and ratio form) on random policy pairs,
/// the identity pair and a greedy-improvement pair.
pub fn check_improvement_bound<R: Rng + ?Sized>(
    mdp: &TinyMdp,
    trials: usize,
    rng: &mut R,
) -> Result<CheckReport> {
    if trials == 0 {
        return Err(Error::domain("check_improvement_bound needs trials >= 1"));
    }
    let started = Instant::now();
    let mut report = CheckReport::new("check_improvement_bound");
    let mut form_gap = 0.0f64;
    let mut min_greedy_gain = f64::INFINITY;
    for k in 0..trials {
        let pi = random_policy(mdp, rng);
        let pi_new: Vec<Simplex> = match k % 3 {
            0 => random_policy(mdp, rng),
            1 => {
                let lambda = rng.random::<f64>().powi(3);
                pi.iter()
                    .map(|p| p.mix(&Simplex::sample(mdp.num_actions(), rng), lambda))
                    .collect()
            }
            _ if k % 9 == 2 => pi.clone(),
            _ => {
                let ev = exact_eval(mdp, &pi)?;
                let greedy = greedy_policy(mdp, &ev.q);
                min_greedy_gain =
                    min_greedy_gain.min(improvement_bound_terms(mdp, &pi, &greedy)?.lhs);
                greedy
            }
        };
        let t = improvement_bound_terms(mdp, &pi, &pi_new)?;
        let mut slack = t.rhs_tv - t.lhs;
        if let Some(ratio) = t.rhs_ratio {
            slack = slack.max(ratio - t.lhs);
            form_gap = form_gap.max((ratio - t.rhs_tv).abs());
        }
        report.record(slack, BOUND_TOL);
    }
    if min_greedy_gain.is_finite() && min_greedy_gain < -BOUND_TOL {
        report.violations += 1;
    }
    report.detail("gamma", mdp.gamma());
    report.detail("num_states", mdp.num_states());
    report.detail("num_actions", mdp.num_actions());
    report.detail("max_tv_vs_ratio_form_gap", form_gap);
    report.detail("constant_discrepancy_flagged", form_gap > BOUND_TOL);
    if min_greedy_gain.is_finite() {
        report.detail("min_greedy_improvement", min_greedy_gain);
    }
    Ok(report.finish(started))
}

fn greedy_policy(mdp: &TinyMdp, q: &[f64]) -> Vec<Simplex> {
    let na = mdp.num_actions();
    (0..mdp.num_states())
        .map(|s| {
            let row = &q[s * na..(s + 1) * na];
            let best = (0..na).fold(0, |b, a| if row[a] > row[b] { a } else { b });
            let mut p = vec![0.0; na];
            p[best] = 1.0;
            Simplex(p)
        })
        .collect()
}

/// Barycentric lattice `{k / n : Σk = n}` over `dim` coordinates.
fn lattice(dim: usize, n: usize) -> Vec<Vec<f64>> {
    fn rec(dim: usize, left: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == dim - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&k| k as f64 / n as f64).collect());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(dim, left - k, n, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, n, n, &mut Vec::with_capacity(dim), &mut out);
    out
}

/// Grid maxima of the TV- and KL-penalised improvement bounds over their feasible sets.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundOrdering {
    pub report: CheckReport,
    pub max_tv_bound: Option<f64>,
    pub max_kl_bound: Option<f64>,
    pub inconclusive: bool,
}

struct Candidate {
    expected_adv: f64,
    tv: f64,
    kl: f64,
}

/// Maximises `L_TV` over `Ω_TV` and `L_KL` over `Ω_KL` by exhaustive search over
/// per-state barycentric lattices of resolution `grid`, and checks
/// `max L_TV >= max L_KL` (within 1e-6). `delta_tv` defaults to `sqrt(delta_kl / 2)`.
pub fn check_bound_ordering(
    mdp: &TinyMdp,
    pi: &[Simplex],
    delta_kl: f64,
    delta_tv: Option<f64>,
    grid: usize,
) -> Result<BoundOrdering> {
    if mdp.num_states() * mdp.num_actions() > 8 {
        return Err(Error::domain("check_bound_ordering needs S*A <= 8"));
    }
    if grid < 50 {
        return Err(Error::domain(format!(
            "grid resolution must be >= 50, got {grid}"
        )));
    }
    if !(delta_kl > 0.0) {
        return Err(Error::domain("delta_kl must be positive"));
    }
    let started = Instant::now();
    let threshold = (delta_kl / 2.0).sqrt();
    let delta_tv = delta_tv.unwrap_or(threshold);
    let ev = exact_eval(mdp, pi)?;
    let (ns, na, g) = (mdp.num_states(), mdp.num_actions(), mdp.gamma());
    let points = lattice(na, grid);

    // per-state candidates feasible under at least one constraint
    let mut per_state: Vec<Vec<Candidate>> = Vec::with_capacity(ns);
    for (s, pi_s) in pi.iter().enumerate().take(ns) {
        let mut cands = Vec::new();
        for pt in &points {
            let cand = Simplex(pt.clone());
            let tv = tv_distance(pi_s, &cand)?;
            let kl = kl_divergence(pi_s, &cand)?;
            if tv <= delta_tv || kl <= delta_kl {
                let expected_adv = (0..na).map(|a| pt[a] * ev.advantage(na, s, a)).sum();
                cands.push(Candidate {
                    expected_adv,
                    tv,
                    kl,
                });
            }
        }
        per_state.push(cands);
    }
    let total = per_state
        .iter()
        .try_fold(1usize, |acc, c| acc.checked_mul(c.len()))
        .unwrap_or(usize::MAX);
    if total > MAX_GRID_POINTS {
        return Err(Error::domain(format!(
            "{total} joint grid points exceed the search limit"
        )));
    }

    let c1 = 1.0 / (1.0 - g);
    let c2 = 2.0 * g / ((1.0 - g) * (1.0 - g));
    let (mut best_tv, mut best_kl) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let (mut n_tv, mut n_kl) = (0usize, 0usize);
    let mut pick = vec![0usize; ns];
    if per_state.iter().all(|c| !c.is_empty()) {
        loop {
            let (mut gain, mut xi, mut pen_tv, mut pen_kl) = (0.0, 0.0f64, 0.0, 0.0);
            let (mut tv_ok, mut kl_ok) = (true, true);
            for s in 0..ns {
                let c = &per_state[s][pick[s]];
                gain += ev.rho[s] * c.expected_adv;
                xi = xi.max(c.expected_adv.abs());
                pen_tv += ev.rho[s] * c.tv;
                pen_kl += ev.rho[s] * (c.kl / 2.0).sqrt();
                tv_ok &= c.tv <= delta_tv;
                kl_ok &= c.kl <= delta_kl;
            }
            if tv_ok {
                n_tv += 1;
                best_tv = best_tv.max(c1 * gain - c2 * xi * pen_tv);
            }
            if kl_ok {
                n_kl += 1;
                best_kl = best_kl.max(c1 * gain - c2 * xi * pen_kl);
            }
            // odometer over joint candidates
            let mut s = 0;
            while s < ns {
                pick[s] += 1;
                if pick[s] < per_state[s].len() {
                    break;
                }
                pick[s] = 0;
                s += 1;
            }
            if s == ns {
                break;
            }
        }
    }

    let mut report = CheckReport::new("check_bound_ordering");
    let inconclusive = n_kl == 0;
    let hypothesis = delta_tv >= threshold;
    if !inconclusive {
        let slack = best_kl - best_tv;
        if hypothesis {
            report.record(slack, ORDERING_TOL);
        } else {
            report.trials = 1;
            report.max_slack = slack;
        }
    }
    report.detail("delta_kl", delta_kl);
    report.detail("delta_tv", delta_tv);
    report.detail("grid", grid);
    report.detail("hypothesis_satisfied", hypothesis);
    report.detail("tv_feasible_points", n_tv);
    report.detail("kl_feasible_points", n_kl);
    report.detail("inconclusive", inconclusive);
    let max_tv_bound = (n_tv > 0).then_some(best_tv);
    let max_kl_bound = (n_kl > 0).then_some(best_kl);
    if let Some(v) = max_tv_bound {
        report.detail("max_tv_bound", v);
    }
    if let Some(v) = max_kl_bound {
        report.detail("max_kl_bound", v);
    }
    Ok(BoundOrdering {
        report: report.finish(started),
        max_tv_bound,
        max_kl_bound,
        inconclusive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, Streams};

    fn rng(k: u64) -> rand_chacha::ChaCha8Rng {
        Streams::new(42).stream(Purpose::Check, &[k])
    }

    #[test]
    fn lattice_counts() {
        assert_eq!(lattice(3, 50).len(), 51 * 52 / 2);
        assert_eq!(lattice(2, 4).len(), 5);
        for p in lattice(4, 7) {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let x = golden_section_max(|x| -(x - 0.73) * (x - 0.73), 0.0, 3.0, 1e-12);
        assert!((x - 0.73).abs() < 1e-8);
    }

    #[test]
    fn pinsker_on_identical_pairs() {
        let p = Simplex::sample(5, &mut rng(0));
        let tv = tv_distance(&p, &p).unwrap();
        let kl = kl_divergence(&p, &p).unwrap();
        assert_eq!(tv, 0.0);
        assert_eq!(kl, 0.0);
    }

    #[test]
    fn pinsker_small_run() {
        let r = check_pinsker(500, 4, &mut rng(1)).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.max_slack <= 0.0);
        assert_eq!(r.trials, 500 + 16);
    }

    #[test]
    fn corner_pairs_hold() {
        for dim in 2..=8 {
            for (p, q) in corner_pairs(dim) {
                let tv = tv_distance(&p, &q).unwrap();
                let kl = kl_divergence(&p, &q).unwrap();
                assert!(tv <= (kl / 2.0).sqrt() + PINSKER_TOL);
            }
        }
    }

    #[test]
    fn prop1_outside_hypothesis_finds_counterexample() {
        let delta = 0.02;
        let low = 0.8 * (delta / 2.0f64).sqrt();
        let r = check_prop1(delta, Some(low), 200, 3, &mut rng(2)).unwrap();
        assert_eq!(r.details["hypothesis_satisfied"], false);
        assert_eq!(r.details["counterexample_found"], true);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn eps_aligned_fixed_points() {
        let a = golden_section_max(|r| spo(r, 1.0, 0.2), R_MIN, R_MAX, 1e-10);
        assert!((a - 1.2).abs() < 1e-6);
        let b = golden_section_max(|r| spo(r, -1.0, 0.2), R_MIN, R_MAX, 1e-10);
        assert!((b - 0.8).abs() < 1e-6);
        assert_eq!(ppo(1.2, 1.0, 0.2), 1.2);
        assert_eq!(ppo(1.4, 1.0, 0.2), 1.2);
    }

    #[test]
    fn eps_aligned_detects_sign_bug() {
        fn flipped(r: f64, a: f64, eps: f64) -> f64 {
            r * a + a.abs() / (2.0 * eps) * (r - 1.0) * (r - 1.0)
        }
        let r = check_eps_aligned_with(50, &mut rng(3), flipped, ppo).unwrap();
        assert!(r.violations > 0);
        let ok = check_eps_aligned(50, &mut rng(3)).unwrap();
        assert_eq!(ok.violations, 0);
    }

    fn one_state_three_actions() -> TinyMdp {
        TinyMdp::new(1, 3, vec![1.0; 3], vec![1.0, 0.0, 0.5], 0.9, vec![1.0]).unwrap()
    }

    #[test]
    fn ordering_vanishing_budget() {
        let pi = [Simplex::new(vec![0.5, 0.3, 0.2]).unwrap()];
        let o = check_bound_ordering(&one_state_three_actions(), &pi, 1e-14, None, 50).unwrap();
        assert!(!o.inconclusive);
        assert!(o.max_tv_bound.unwrap().abs() < 1e-12);
        assert!(o.max_kl_bound.unwrap().abs() < 1e-12);
        assert_eq!(o.report.details["kl_feasible_points"], 1);
    }

    #[test]
    fn ordering_inconclusive_when_grid_misses_ball() {
        // π off the lattice and a tiny budget: no grid point is KL-feasible
        let pi = [Simplex::new(vec![0.503, 0.297, 0.2]).unwrap()];
        let o = check_bound_ordering(&one_state_three_actions(), &pi, 1e-10, None, 50).unwrap();
        assert!(o.inconclusive);
        assert_eq!(o.report.violations, 0);
    }

    #[test]
    fn ordering_grows_with_tv_budget() {
        let mdp = one_state_three_actions();
        let pi = [Simplex::new(vec![0.5, 0.3, 0.2]).unwrap()];
        let base = check_bound_ordering(&mdp, &pi, 0.02, None, 50).unwrap();
        let wide = check_bound_ordering(&mdp, &pi, 0.02, Some(0.2), 50).unwrap();
        assert_eq!(base.report.violations, 0);
        assert_eq!(wide.report.violations, 0);
        assert!(wide.max_tv_bound.unwrap() >= base.max_tv_bound.unwrap());
        assert!(base.max_tv_bound.unwrap() >= base.max_kl_bound.unwrap() - ORDERING_TOL);
    }

    #[test]
    fn greedy_improvement_is_nonnegative() {
        let mdp = TinyMdp::new(
            2,
            2,
            vec![0.9, 0.1, 0.2, 0.8, 0.3, 0.7, 0.6, 0.4],
            vec![1.0, 0.0, -0.5, 2.0],
            0.9,
            vec![0.5, 0.5],
        )
        .unwrap();
        let pi = random_policy(&mdp, &mut rng(4));
        let ev = exact_eval(&mdp, &pi).unwrap();
        let greedy = greedy_policy(&mdp, &ev.q);
        let t = improvement_bound_terms(&mdp, &pi, &greedy).unwrap();
        assert!(t.lhs >= 0.0);
        assert!(t.lhs >= t.rhs_tv - BOUND_TOL);
    }
}
