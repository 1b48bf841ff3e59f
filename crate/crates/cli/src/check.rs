//! The theory check suite behind `cfpo check`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use cfpo_core::rng::{Purpose, Streams};
use cfpo_core::theory::{
    check_bound_ordering, check_eps_aligned_with, check_improvement_bound, check_pinsker,
    check_prop1, clipped_surrogate, clipping_free_surrogate, CheckReport, Simplex, Surrogate,
    TinyMdp,
};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Pairs per dimension, for each dimension in `pinsker_dims`.
    pub pinsker_trials: usize,
    pub pinsker_dims: Vec<usize>,
    pub prop1_delta_kl: f64,
    pub prop1_trials: usize,
    pub prop1_dim: usize,
    pub eps_aligned_trials: usize,
    /// Policy pairs per MDP.
    pub improvement_trials: usize,
    pub ordering_delta_kl: f64,
    pub ordering_grid: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            pinsker_trials: 10_000,
            pinsker_dims: (2..=8).collect(),
            prop1_delta_kl: 0.02,
            prop1_trials: 1000,
            prop1_dim: 4,
            eps_aligned_trials: 1000,
            improvement_trials: 1000,
            ordering_delta_kl: 0.02,
            ordering_grid: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub passed: bool,
    pub failed: Vec<String>,
    pub options: SuiteOptions,
    pub checks: Vec<CheckReport>,
}

/// The three fixed MDPs of the improvement-bound check, with discount 0.5, 0.9, 0.99.
pub fn improvement_mdps() -> Vec<TinyMdp> {
    let build =
        |s, a, p, r, g, init| TinyMdp::new(s, a, p, r, g, init).expect("fixture MDPs are valid");
    vec![
        build(
            2,
            2,
            vec![0.9, 0.1, 0.2, 0.8, 0.3, 0.7, 0.6, 0.4],
            vec![1.0, 0.0, -0.5, 2.0],
            0.5,
            vec![0.5, 0.5],
        ),
        build(
            3,
            2,
            vec![
                0.7, 0.2, 0.1, 0.1, 0.1, 0.8, //
                0.0, 0.5, 0.5, 0.3, 0.3, 0.4, //
                0.2, 0.0, 0.8, 0.9, 0.1, 0.0,
            ],
            vec![0.0, 1.0, 0.5, -1.0, 2.0, 0.2],
            0.9,
            vec![1.0, 0.0, 0.0],
        ),
        build(
            2,
            3,
            vec![1.0, 0.0, 0.5, 0.5, 0.0, 1.0, 0.2, 0.8, 0.6, 0.4, 0.9, 0.1],
            vec![0.3, -0.2, 1.0, 0.0, 0.5, -1.0],
            0.99,
            vec![0.3, 0.7],
        ),
    ]
}

/// One state with three actions; rewards 1, 0, 0.5.
pub fn ordering_mdp() -> TinyMdp {
    TinyMdp::new(1, 3, vec![1.0; 3], vec![1.0, 0.0, 0.5], 0.9, vec![1.0])
        .expect("fixture MDP is valid")
}

/// Check name tagged with its dimension or discount, when it has one.
pub fn label(report: &CheckReport) -> String {
    let keys = ["dim", "gamma"];
    let tags: Vec<String> = keys
        .iter()
        .filter_map(|k| report.details.get(*k).map(|v| format!("{k}={v}")))
        .collect();
    if tags.is_empty() {
        report.check_name.clone()
    } else {
        format!("{}[{}]", report.check_name, tags.join(","))
    }
}

/// Runs every check with `penalty` standing in for the clipping-free surrogate.
pub fn run_suite(opts: &SuiteOptions, penalty: Surrogate) -> Result<SuiteReport> {
    let streams = Streams::new(opts.seed);
    let mut checks = Vec::new();
    for (k, &dim) in opts.pinsker_dims.iter().enumerate() {
        let mut rng = streams.stream(Purpose::Check, &[0, k as u64]);
        let mut r = check_pinsker(opts.pinsker_trials, dim, &mut rng)?;
        r.details.insert("dim".into(), dim.into());
        checks.push(r);
    }
    let mut rng = streams.stream(Purpose::Check, &[1]);
    checks.push(check_prop1(
        opts.prop1_delta_kl,
        None,
        opts.prop1_trials,
        opts.prop1_dim,
        &mut rng,
    )?);
    let mut rng = streams.stream(Purpose::Check, &[2]);
    checks.push(check_eps_aligned_with(
        opts.eps_aligned_trials,
        &mut rng,
        penalty,
        clipped_surrogate,
    )?);
    for (k, mdp) in improvement_mdps().iter().enumerate() {
        let mut rng = streams.stream(Purpose::Check, &[3, k as u64]);
        let mut r = check_improvement_bound(mdp, opts.improvement_trials, &mut rng)?;
        r.details.insert("gamma".into(), mdp.gamma().into());
        checks.push(r);
    }
    let pi = [Simplex::new(vec![0.5, 0.3, 0.2])?];
    let ordering = check_bound_ordering(
        &ordering_mdp(),
        &pi,
        opts.ordering_delta_kl,
        None,
        opts.ordering_grid,
    )?;
    let mut ordering_report = ordering.report;
    if ordering.inconclusive {
        ordering_report.violations += 1;
    }
    checks.push(ordering_report);

    let failed: Vec<String> = checks.iter().filter(|c| !c.passed()).map(label).collect();
    Ok(SuiteReport {
        passed: failed.is_empty(),
        failed,
        options: opts.clone(),
        checks,
    })
}

/// Runs the suite, writes `report_path`, and fails naming every check with violations.
pub fn cmd_check_with(
    report_path: &Path,
    opts: &SuiteOptions,
    penalty: Surrogate,
) -> Result<SuiteReport> {
    let report = run_suite(opts, penalty)?;
    if let Some(parent) = report_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let json = serde_json::to_string_pretty(&report).map_err(cfpo_core::Error::from)? + "\n";
    std::fs::write(report_path, json).map_err(|e| CliError::io(report_path, e))?;
    if report.passed {
        Ok(report)
    } else {
        Err(CliError::CheckFailed(report.failed))
    }
}

pub fn cmd_check(report_path: &Path, opts: &SuiteOptions) -> Result<SuiteReport> {
    cmd_check_with(report_path, opts, clipping_free_surrogate)
}
