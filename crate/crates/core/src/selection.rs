//! Regularization grid and cross-validated linear predictor (CV-PL) selection of lambda.
//!
//! For each fold the model is fitted along the shared grid on the other folds,
//! and the held-out standardized residuals `(y_i - x_i^T beta_hat^(-k)) / sigma_hat`
//! are pooled over all subjects. The score of a lambda is the negative Weibull
//! log-likelihood of the pooled residuals, with one `sigma_hat` throughout.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AftError, Result};
use crate::network::NetworkPrior;
use crate::rng::{stream, StreamRole};
use crate::solver::{fit_path, null_coefficients, SolverOptions};
use crate::survival::{beta_gradient_from_eta, SurvivalDataset, RESIDUAL_OVERFLOW_LIMIT};

pub const DEFAULT_N_LAMBDA: usize = 50;
pub const DEFAULT_MIN_RATIO: f64 = 0.01;
pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    /// Strictly decreasing, log10-equispaced from `lambda_max` to `lambda_min`.
    pub values: Vec<f64>,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub n_lambda: usize,
    pub min_ratio: f64,
}

/// Smallest lambda with an all-zero solution: `|grad_beta l_n(null)|_inf / alpha`.
///
/// The result is nudged up by at most a few ulps so that `lambda_max * alpha`
/// is never below the gradient norm in floating point.
pub fn lambda_max(data: &SurvivalDataset, alpha: f64, sigma_hat: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(AftError::InvalidParameter(format!(
            "alpha must lie in (0, 1] for a finite lambda_max, got {alpha}"
        )));
    }
    if !(sigma_hat > 0.0 && sigma_hat.is_finite()) {
        return Err(AftError::InvalidParameter(format!("sigma_hat must be positive, got {sigma_hat}")));
    }
    let null = null_coefficients(data, sigma_hat);
    let eta = data.features().dot(&null);
    let grad = beta_gradient_from_eta(data, eta.view(), sigma_hat)?;
    let offset = usize::from(data.has_intercept());
    let gmax = grad.iter().skip(offset).fold(0.0_f64, |a, g| a.max(g.abs()));
    if gmax == 0.0 {
        return Err(AftError::NullProblem);
    }
    let mut lam = gmax / alpha;
    while lam * alpha < gmax {
        lam = f64::from_bits(lam.to_bits() + 1);
    }
    Ok(lam)
}

pub fn make_lambda_grid(
    data: &SurvivalDataset,
    alpha: f64,
    sigma_hat: f64,
    n_lambda: usize,
    min_ratio: f64,
) -> Result<LambdaGrid> {
    let lmax = lambda_max(data, alpha, sigma_hat)?;
    grid_from_max(lmax, n_lambda, min_ratio)
}

/// Log-equispaced grid from a given `lambda_max`.
pub fn grid_from_max(lambda_max: f64, n_lambda: usize, min_ratio: f64) -> Result<LambdaGrid> {
    if n_lambda == 0 {
        return Err(AftError::InvalidParameter("n_lambda must be >= 1".into()));
    }
    if !(min_ratio > 0.0 && min_ratio < 1.0) {
        return Err(AftError::InvalidParameter(format!("min_ratio must lie in (0, 1), got {min_ratio}")));
    }
    let lambda_min = min_ratio * lambda_max;
    let values: Vec<f64> = if n_lambda == 1 {
        vec![lambda_max]
    } else {
        let last = (n_lambda - 1) as f64;
        (0..n_lambda)
            .map(|i| match i {
                0 => lambda_max,
                _ if i == n_lambda - 1 => lambda_min,
                _ => lambda_max * min_ratio.powf(i as f64 / last),
            })
            .collect()
    };
    Ok(LambdaGrid {
        lambda_min: *values.last().expect("non-empty"),
        values,
        lambda_max,
        n_lambda,
        min_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    /// Deal events and censored subjects separately so every fold gets a share of both.
    pub stratified: bool,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: DEFAULT_FOLDS,
            seed: 0,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub lambda_opt: f64,
    pub lambda_opt_index: usize,
    pub lambdas: Vec<f64>,
    pub cv_curve: Vec<f64>,
    pub fold_assignment: Vec<usize>,
    pub folds: usize,
    pub seed: u64,
    pub stratified: bool,
}

/// Seeded fold labels in `0..folds`; fold sizes differ by at most one.
pub fn assign_folds(events: &[bool], folds: usize, seed: u64, stratified: bool) -> Result<Vec<usize>> {
    let n = events.len();
    if folds < 2 || folds > n {
        return Err(AftError::InvalidParameter(format!(
            "fold count must lie in [2, {n}], got {folds}"
        )));
    }
    let mut rng = stream(seed, StreamRole::Folds);
    let order: Vec<usize> = if stratified {
        let mut ev: Vec<usize> = (0..n).filter(|&i| events[i]).collect();
        let mut cens: Vec<usize> = (0..n).filter(|&i| !events[i]).collect();
        ev.shuffle(&mut rng);
        cens.shuffle(&mut rng);
        ev.into_iter().chain(cens).collect()
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all
    };
    let mut labels = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = pos % folds;
    }
    Ok(labels)
}

/// `-sum_i [delta_i (-log sigma + e_i) - exp(e_i)]` over pooled residuals, in index order.
pub fn cv_score(residuals: &[f64], events: &[bool], sigma_hat: f64) -> f64 {
    let log_sigma = sigma_hat.ln();
    let mut total = 0.0;
    for (&e, &d) in residuals.iter().zip(events) {
        if e > RESIDUAL_OVERFLOW_LIMIT || e.is_nan() {
            return f64::INFINITY;
        }
        if d {
            total += e - log_sigma;
        }
        total -= e.exp();
    }
    -total
}

/// Index of the smallest score; ties go to the earliest entry (the larger lambda).
fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        let b = values[best];
        if v < b || (b.is_nan() && !v.is_nan()) {
            best = i;
        }
    }
    best
}

/// Held-out residual matrix (`n_lambda x n`) for one fold assignment.
fn pooled_residuals(
    data: &SurvivalDataset,
    prior: &NetworkPrior,
    alpha: f64,
    grid: &LambdaGrid,
    labels: &[usize],
    folds: usize,
    sigma_hat: f64,
    opts: &SolverOptions,
) -> Result<Array2<f64>> {
    let per_fold: Vec<Result<(Vec<usize>, Array2<f64>)>> = (0..folds)
        .into_par_iter()
        .map(|k| {
            let train: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != k).collect();
            let test: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
            if !train.iter().any(|&i| data.events()[i]) {
                return Err(AftError::InfeasibleFold { fold: k });
            }
            let wrap = |source| AftError::InFold {
                fold: k,
                source: Box::new(source),
            };
            let train_data = data.subset(&train).map_err(wrap)?;
            let path = fit_path(&train_data, prior, alpha, &grid.values, sigma_hat, opts).map_err(wrap)?;
            let x = data.features();
            let y = data.log_times();
            let mut resid = Array2::zeros((grid.values.len(), test.len()));
            for (l, fit) in path.fits.iter().enumerate() {
                let coef = fit.coefficients();
                for (t, &i) in test.iter().enumerate() {
                    resid[[l, t]] = (y[i] - x.row(i).dot(&coef)) / sigma_hat;
                }
            }
            Ok((test, resid))
        })
        .collect();

    let mut pooled = Array2::zeros((grid.values.len(), data.n_samples()));
    for item in per_fold {
        let (test, resid) = item?;
        for (t, &i) in test.iter().enumerate() {
            pooled.column_mut(i).assign(&resid.column(t));
        }
    }
    Ok(pooled)
}

/// K-fold CV-PL over a shared grid. Folds may run in parallel; the report does not
/// depend on scheduling.
pub fn cv_pl(
    data: &SurvivalDataset,
    prior: &NetworkPrior,
    alpha: f64,
    grid: &LambdaGrid,
    cv: &CvOptions,
    sigma_hat: f64,
    opts: &SolverOptions,
) -> Result<CvReport> {
    let labels = assign_folds(data.events(), cv.folds, cv.seed, cv.stratified)?;
    for k in 0..cv.folds {
        let has_event = labels.iter().zip(data.events()).any(|(&l, &d)| l != k && d);
        if !has_event {
            return Err(AftError::InfeasibleFold { fold: k });
        }
    }
    let pooled = pooled_residuals(data, prior, alpha, grid, &labels, cv.folds, sigma_hat, opts)?;
    let cv_curve: Vec<f64> = pooled
        .outer_iter()
        .map(|row| {
            let r: Array1<f64> = row.to_owned();
            cv_score(r.as_slice().expect("contiguous"), data.events(), sigma_hat)
        })
        .collect();
    let best = argmin_first(&cv_curve);
    Ok(CvReport {
        lambda_opt: grid.values[best],
        lambda_opt_index: best,
        lambdas: grid.values.clone(),
        cv_curve,
        fold_assignment: labels,
        folds: cv.folds,
        seed: cv.seed,
        stratified: cv.stratified,
    })
}
