use nalgebra::{DMatrix, DVector};

use super::{tv_distance, Simplex};
use crate::{Error, Result};

const ROW_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;

/// Finite discounted MDP with at most 4 states and 4 actions.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyMdp {
    num_states: usize,
    num_actions: usize,
    /// `transitions[(s * A + a) * S + s2] = P(s2 | s, a)`.
    transitions: Vec<f64>,
    /// `rewards[s * A + a]`.
    rewards: Vec<f64>,
    gamma: f64,
    initial: Vec<f64>,
}

impl TinyMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        gamma: f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if !(1..=4).contains(&num_states) || !(1..=4).contains(&num_actions) {
            return Err(Error::domain(
                "tiny MDPs have 1..=4 states and 1..=4 actions",
            ));
        }
        if transitions.len() != num_states * num_actions * num_states {
            return Err(Error::domain("transition tensor has the wrong size"));
        }
        if rewards.len() != num_states * num_actions || initial.len() != num_states {
            return Err(Error::domain(
                "reward table or initial distribution has the wrong size",
            ));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::domain(format!(
                "discount must lie in (0, 1), got {gamma}"
            )));
        }
        for (k, row) in transitions.chunks(num_states).enumerate() {
            if row.iter().any(|&p| !(p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > ROW_TOL {
                return Err(Error::domain(format!(
                    "transition row (s={}, a={}) is not a distribution",
                    k / num_actions,
                    k % num_actions
                )));
            }
        }
        if initial.iter().any(|&p| !(p >= 0.0))
            || (initial.iter().sum::<f64>() - 1.0).abs() > ROW_TOL
        {
            return Err(Error::domain("initial distribution is not a distribution"));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::domain("rewards must be finite"));
        }
        Ok(Self {
            num_states,
            num_actions,
            transitions,
            rewards,
            gamma,
            initial,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[(s * self.num_actions + a) * self.num_states + next]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.num_actions + a]
    }

    fn check_policy(&self, policy: &[Simplex]) -> Result<()> {
        if policy.len() != self.num_states || policy.iter().any(|p| p.dim() != self.num_actions) {
            return Err(Error::domain("policy shape does not match the MDP"));
        }
        Ok(())
    }
}

/// Exact quantities of a policy on a [`TinyMdp`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    /// Expected discounted return from the initial distribution.
    pub eta: f64,
    pub values: Vec<f64>,
    /// `q[s * A + a]`.
    pub q: Vec<f64>,
    /// `advantages[s * A + a] = Q(s, a) - V(s)`.
    pub advantages: Vec<f64>,
    /// Unnormalised discounted visitation `Σ_t γ^t P(s_t = s)`.
    pub visitation: Vec<f64>,
    /// `(1-γ)·visitation`, a distribution over states.
    pub rho: Vec<f64>,
}

impl PolicyEvaluation {
    pub fn advantage(&self, num_actions: usize, s: usize, a: usize) -> f64 {
        self.advantages[s * num_actions + a]
    }
}

fn solve(m: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let x = m
        .clone()
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Solve("singular Bellman system".into()))?;
    let residual = (&m * &x - &b).amax();
    if residual > RESIDUAL_TOL {
        return Err(Error::Solve(format!(
            "residual {residual:e} exceeds tolerance"
        )));
    }
    Ok(x)
}

/// Solves `(I - γ P_π) V = r_π` and the visitation system `(I - γ P_π)^T d = μ0` directly.
pub fn exact_eval(mdp: &TinyMdp, policy: &[Simplex]) -> Result<PolicyEvaluation> {
    mdp.check_policy(policy)?;
    let (ns, na, g) = (mdp.num_states, mdp.num_actions, mdp.gamma);
    let mut p_pi = DMatrix::<f64>::zeros(ns, ns);
    let mut r_pi = DVector::<f64>::zeros(ns);
    for s in 0..ns {
        for a in 0..na {
            let pa = policy[s].probs()[a];
            r_pi[s] += pa * mdp.reward(s, a);
            for s2 in 0..ns {
                p_pi[(s, s2)] += pa * mdp.transition(s, a, s2);
            }
        }
    }
    let system = DMatrix::<f64>::identity(ns, ns) - p_pi * g;
    let v = solve(system.clone(), r_pi)?;
    let d = solve(system.transpose(), DVector::from_vec(mdp.initial.clone()))?;

    let mut q = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let next: f64 = (0..ns).map(|s2| mdp.transition(s, a, s2) * v[s2]).sum();
            q[s * na + a] = mdp.reward(s, a) + g * next;
        }
    }
    let advantages = (0..ns * na).map(|k| q[k] - v[k / na]).collect();
    let eta = mdp.initial.iter().zip(v.iter()).map(|(m, v)| m * v).sum();
    let visitation: Vec<f64> = d.iter().copied().collect();
    Ok(PolicyEvaluation {
        eta,
        values: v.iter().copied().collect(),
        q,
        advantages,
        rho: visitation.iter().map(|x| (1.0 - g) * x).collect(),
        visitation,
    })
}

/// Both sides of the TV performance-improvement bound for `π → π̃`, plus its ratio form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    /// `η(π̃) - η(π)`.
    pub lhs: f64,
    /// `1/(1-γ)·E_{ρπ, π̃}[A_π] - 2ξγ/(1-γ)²·E_{ρπ}[TV]`.
    pub rhs_tv: f64,
    /// `1/(1-γ)·E_{ρπ, π}[r·A_π] - ξγ/(1-γ)²·E_{ρπ, π}[|r - 1|]`; `None` when π̃
    /// puts mass on an action π never takes.
    pub rhs_ratio: Option<f64>,
    /// `max_s |E_{a∼π̃}[A_π(s, a)]|`.
    pub xi: f64,
    pub expected_advantage: f64,
    pub mean_tv: f64,
}

pub fn improvement_bound_terms(
    mdp: &TinyMdp,
    pi: &[Simplex],
    pi_new: &[Simplex],
) -> Result<BoundTerms> {
    mdp.check_policy(pi_new)?;
    let old = exact_eval(mdp, pi)?;
    let new = exact_eval(mdp, pi_new)?;
    let (ns, na, g) = (mdp.num_states, mdp.num_actions, mdp.gamma);

    let mut xi: f64 = 0.0;
    let (mut expected_advantage, mut mean_tv) = (0.0, 0.0);
    let (mut ratio_gain, mut ratio_dev) = (0.0, 0.0);
    let mut ratio_defined = true;
    for s in 0..ns {
        let (p, pn) = (pi[s].probs(), pi_new[s].probs());
        let e_adv: f64 = (0..na).map(|a| pn[a] * old.advantage(na, s, a)).sum();
        xi = xi.max(e_adv.abs());
        expected_advantage += old.rho[s] * e_adv;
        mean_tv += old.rho[s] * tv_distance(&pi[s], &pi_new[s])?;
        for a in 0..na {
            if p[a] > 0.0 {
                let r = pn[a] / p[a];
                ratio_gain += old.rho[s] * p[a] * r * old.advantage(na, s, a);
                ratio_dev += old.rho[s] * p[a] * (r - 1.0).abs();
            } else if pn[a] > 0.0 {
                ratio_defined = false;
            }
        }
    }
    let c1 = 1.0 / (1.0 - g);
    let c2 = xi * g / ((1.0 - g) * (1.0 - g));
    Ok(BoundTerms {
        lhs: new.eta - old.eta,
        rhs_tv: c1 * expected_advantage - 2.0 * c2 * mean_tv,
        rhs_ratio: ratio_defined.then_some(c1 * ratio_gain - c2 * ratio_dev),
        xi,
        expected_advantage,
        mean_tv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[f64]) -> Simplex {
        Simplex::new(v.to_vec()).unwrap()
    }

    #[test]
    fn zero_rewards() {
        let mdp = TinyMdp::new(2, 2, vec![0.5; 8], vec![0.0; 4], 0.9, vec![1.0, 0.0]).unwrap();
        let ev = exact_eval(&mdp, &[s(&[0.3, 0.7]), s(&[0.5, 0.5])]).unwrap();
        assert_eq!(ev.eta, 0.0);
        assert!(ev.advantages.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn single_state_geometric_series() {
        let mdp = TinyMdp::new(1, 2, vec![1.0, 1.0], vec![2.0, -1.0], 0.8, vec![1.0]).unwrap();
        let ev = exact_eval(&mdp, &[s(&[1.0, 0.0])]).unwrap();
        assert!((ev.eta - 2.0 / 0.2).abs() < 1e-12);
        assert!((ev.visitation[0] - 5.0).abs() < 1e-12);
        assert!((ev.rho[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_state_chain_closed_form() {
        // both actions move 0 -> 1; 1 is absorbing; r(0, .) = 1, r(1, .) = 2
        // V1 = 2 / (1-γ) = 4, V0 = 1 + γ V1 = 3, visitation = [1, γ/(1-γ)] = [1, 1]
        let g = 0.5;
        let t = vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let mdp = TinyMdp::new(2, 2, t, vec![1.0, 1.0, 2.0, 2.0], g, vec![1.0, 0.0]).unwrap();
        let ev = exact_eval(&mdp, &[s(&[0.4, 0.6]), s(&[0.9, 0.1])]).unwrap();
        assert!((ev.values[0] - 3.0).abs() < 1e-12);
        assert!((ev.values[1] - 4.0).abs() < 1e-12);
        assert!((ev.eta - 3.0).abs() < 1e-12);
        assert!((ev.visitation[0] - 1.0).abs() < 1e-12);
        assert!((ev.visitation[1] - 1.0).abs() < 1e-12);
        assert!((ev.rho.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_policies_give_zero_bound() {
        let mdp = TinyMdp::new(
            2,
            2,
            vec![0.9, 0.1, 0.2, 0.8, 0.3, 0.7, 0.6, 0.4],
            vec![1.0, 0.0, -0.5, 2.0],
            0.9,
            vec![0.5, 0.5],
        )
        .unwrap();
        let pi = [s(&[0.3, 0.7]), s(&[0.6, 0.4])];
        let t = improvement_bound_terms(&mdp, &pi, &pi).unwrap();
        assert!(t.lhs.abs() < 1e-12);
        assert!(t.rhs_tv.abs() < 1e-12);
        assert!(t.rhs_ratio.unwrap().abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_mdps() {
        assert!(TinyMdp::new(
            2,
            1,
            vec![0.5, 0.4, 0.0, 1.0],
            vec![0.0; 2],
            0.9,
            vec![1.0, 0.0]
        )
        .is_err());
        assert!(TinyMdp::new(1, 1, vec![1.0], vec![0.0], 1.0, vec![1.0]).is_err());
        assert!(TinyMdp::new(5, 1, vec![0.2; 25], vec![0.0; 5], 0.9, vec![0.2; 5]).is_err());
    }
}
