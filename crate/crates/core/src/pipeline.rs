//! End-to-end benchmark replications: simulate, estimate the scale, pick lambda by
//! CV-PL, trace the full path, and score the selected fit against the truth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::evaluation::{c_index, roc_auc, selection_metrics, selection_roc, MetricsReport};
use crate::scale::{estimate_sigma, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::selection::{cv_pl, make_lambda_grid, CvOptions, DEFAULT_FOLDS, DEFAULT_MIN_RATIO, DEFAULT_N_LAMBDA};
use crate::solver::{fit_path, SolverOptions};
use crate::synthetic::{simulate_scenario, ScenarioConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateConfig {
    /// Base scenario; replication `k` uses seed `scenario.seed + k`.
    pub scenario: ScenarioConfig,
    pub reps: usize,
    pub alpha: f64,
    pub n_lambda: usize,
    pub min_ratio: f64,
    pub folds: usize,
    pub stratified: bool,
    pub solver: SolverOptions,
}

impl ReplicateConfig {
    pub fn new(scenario: ScenarioConfig, reps: usize, alpha: f64) -> Self {
        Self {
            scenario,
            reps,
            alpha,
            n_lambda: DEFAULT_N_LAMBDA,
            min_ratio: DEFAULT_MIN_RATIO,
            folds: DEFAULT_FOLDS,
            stratified: true,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub rep: usize,
    pub seed: u64,
    pub sigma_hat: f64,
    pub lambda_opt: f64,
    pub lambda_opt_index: usize,
    pub metrics: MetricsReport,
    pub c_index: f64,
    pub roc_auc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub reps: usize,
    pub emse: f64,
    pub pmse: f64,
    pub fnr: f64,
    pub fpr: f64,
    pub nsr: f64,
    pub c_index: f64,
    pub roc_auc: f64,
}

pub fn run_replication(cfg: &ReplicateConfig, rep: usize) -> Result<ReplicationOutcome> {
    let mut scenario_cfg = cfg.scenario.clone();
    scenario_cfg.seed = cfg.scenario.seed.wrapping_add(rep as u64);
    let sc = simulate_scenario(&scenario_cfg)?;

    let scale = estimate_sigma(&sc.train, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let sigma_hat = scale.sigma_hat;
    let grid = make_lambda_grid(&sc.train, cfg.alpha, sigma_hat, cfg.n_lambda, cfg.min_ratio)?;
    let cv_opts = CvOptions {
        folds: cfg.folds,
        seed: scenario_cfg.seed,
        stratified: cfg.stratified,
    };
    let cv = cv_pl(&sc.train, &sc.prior, cfg.alpha, &grid, &cv_opts, sigma_hat, &cfg.solver)?;
    let path = fit_path(&sc.train, &sc.prior, cfg.alpha, &grid.values, sigma_hat, &cfg.solver)?;
    let selected = &path.fits[cv.lambda_opt_index];

    let x_test = sc.test.covariates().to_owned();
    let metrics = selection_metrics(selected.beta_hat.view(), &sc.truth, &x_test)?;
    let risks = -x_test.dot(&selected.beta_hat);
    let c = c_index(risks.view(), sc.test.log_times(), sc.test.events())?;
    let auc = roc_auc(&selection_roc(&path, &sc.truth)?);
    Ok(ReplicationOutcome {
        rep,
        seed: scenario_cfg.seed,
        sigma_hat,
        lambda_opt: cv.lambda_opt,
        lambda_opt_index: cv.lambda_opt_index,
        metrics,
        c_index: c,
        roc_auc: auc,
    })
}

pub fn summarize(outcomes: &[ReplicationOutcome]) -> ReplicationSummary {
    let n = outcomes.len() as f64;
    let mean = |f: fn(&ReplicationOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / n;
    ReplicationSummary {
        reps: outcomes.len(),
        emse: mean(|o| o.metrics.emse),
        pmse: mean(|o| o.metrics.pmse),
        fnr: mean(|o| o.metrics.fnr),
        fpr: mean(|o| o.metrics.fpr),
        nsr: mean(|o| o.metrics.nsr),
        c_index: mean(|o| o.c_index),
        roc_auc: mean(|o| o.roc_auc),
    }
}

/// All replications in parallel; results are in replication order, so the summary
/// is independent of scheduling.
pub fn replicate(cfg: &ReplicateConfig) -> Result<(Vec<ReplicationOutcome>, ReplicationSummary)> {
    let outcomes = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_replication(cfg, rep))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&outcomes);
    Ok((outcomes, summary))
}
