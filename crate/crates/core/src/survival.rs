//! Weibull accelerated failure time likelihood for right-censored data.
//!
//! On the log-time scale the model is `y_i = x_i^T beta + sigma * eps_i` with
//! `eps_i` standard (minimum) Gumbel. With standardized residuals
//! `e_i = (y_i - x_i^T beta) / sigma` the per-subject log-likelihood is
//!
//! ```text
//! l_i = delta_i * (-log sigma + e_i) - exp(e_i)
//! ```
//!
//! Everything exposed here is in the normalized convention
//! `l_n(theta) = -(1/n) * sum_i l_i`, except [`observed_information`], which
//! returns `-d^2 l / d theta^2` of the raw (unnormalized) log-likelihood. The
//! two are related by `hessian(l_n) = observed_information / n`.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{AftError, Result};
use crate::spectral::power_iteration;

/// Standardized residuals above this value are treated as an overflow.
pub const RESIDUAL_OVERFLOW_LIMIT: f64 = 700.0;

/// Observed `(y_i, delta_i, x_i)` triples.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    features: Array2<f64>,
    log_times: Array1<f64>,
    events: Vec<bool>,
    feature_names: Option<Vec<String>>,
    intercept: bool,
}

impl SurvivalDataset {
    pub fn new(features: Array2<f64>, log_times: Array1<f64>, events: Vec<bool>) -> Result<Self> {
        let n = features.nrows();
        if log_times.len() != n {
            return Err(AftError::DimensionMismatch {
                what: "log_times length vs feature rows",
                expected: n,
                found: log_times.len(),
            });
        }
        if events.len() != n {
            return Err(AftError::DimensionMismatch {
                what: "events length vs feature rows",
                expected: n,
                found: events.len(),
            });
        }
        if n == 0 {
            return Err(AftError::InvalidData("dataset has no subjects".into()));
        }
        if let Some(i) = log_times.iter().position(|y| !y.is_finite()) {
            return Err(AftError::InvalidData(format!("log time of subject {i} is not finite")));
        }
        if let Some(((i, j), _)) = features.indexed_iter().find(|(_, x)| !x.is_finite()) {
            return Err(AftError::InvalidData(format!("feature ({i}, {j}) is not finite")));
        }
        if !events.iter().any(|&d| d) {
            return Err(AftError::InvalidData("all subjects are censored".into()));
        }
        Ok(Self {
            features,
            log_times,
            events,
            feature_names: None,
            intercept: false,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.features.ncols() {
            return Err(AftError::DimensionMismatch {
                what: "feature names vs feature columns",
                expected: self.features.ncols(),
                found: names.len(),
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    /// Prepends a constant-1 column that the solver leaves unpenalized by default.
    /// Calling it twice is a no-op.
    pub fn with_intercept(mut self) -> Self {
        if self.intercept {
            return self;
        }
        let ones = Array2::ones((self.features.nrows(), 1));
        self.features = concatenate![Axis(1), ones, self.features];
        if let Some(names) = self.feature_names.as_mut() {
            names.insert(0, "(intercept)".to_string());
        }
        self.intercept = true;
        self
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    /// Number of design columns, including the intercept column if present.
    pub fn n_columns(&self) -> usize {
        self.features.ncols()
    }

    /// Number of covariates, excluding the intercept column.
    pub fn n_features(&self) -> usize {
        self.features.ncols() - usize::from(self.intercept)
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    /// Covariate columns only (intercept column dropped).
    pub fn covariates(&self) -> ArrayView2<'_, f64> {
        self.features.slice(s![.., usize::from(self.intercept)..])
    }

    pub fn log_times(&self) -> ArrayView1<'_, f64> {
        self.log_times.view()
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&d| d).count()
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Rows selected by `indices`, in that order. Fails if the subset has no events.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select(Axis(0), indices);
        let log_times = self.log_times.select(Axis(0), indices);
        let events: Vec<bool> = indices.iter().map(|&i| self.events[i]).collect();
        if !events.iter().any(|&d| d) {
            return Err(AftError::InvalidData("subset contains no events".into()));
        }
        Ok(Self {
            features,
            log_times,
            events,
            feature_names: self.feature_names.clone(),
            intercept: self.intercept,
        })
    }

    pub(crate) fn with_features(&self, features: Array2<f64>) -> Self {
        Self {
            features,
            log_times: self.log_times.clone(),
            events: self.events.clone(),
            feature_names: self.feature_names.clone(),
            intercept: self.intercept,
        }
    }

    pub fn linear_predictor(&self, beta: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_len("beta length vs design columns", self.n_columns(), beta.len())?;
        Ok(self.features.dot(&beta))
    }
}

/// Coefficients and scale, `theta = (beta, sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    beta: Array1<f64>,
    sigma: f64,
}

impl ModelParams {
    pub fn new(beta: Array1<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(AftError::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(AftError::InvalidParameter("beta has non-finite entries".into()));
        }
        Ok(Self { beta, sigma })
    }

    pub fn zeros(p: usize, sigma: f64) -> Result<Self> {
        Self::new(Array1::zeros(p), sigma)
    }

    pub fn beta(&self) -> ArrayView1<'_, f64> {
        self.beta.view()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(AftError::DimensionMismatch { what, expected, found })
    }
}

fn check_params(params: &ModelParams, data: &SurvivalDataset) -> Result<()> {
    check_len("beta length vs design columns", data.n_columns(), params.beta.len())
}

/// `e_i = (y_i - x_i^T beta) / sigma`.
pub fn standardized_residuals(params: &ModelParams, data: &SurvivalDataset) -> Result<Array1<f64>> {
    check_params(params, data)?;
    let eta = data.features.dot(&params.beta);
    Ok(residuals_from_eta(data.log_times.view(), eta.view(), params.sigma))
}

/// `X^T w` accumulated over rows, which keeps memory access contiguous for a
/// row-major `X`.
pub(crate) fn xt_mul(x: ArrayView2<f64>, w: ArrayView1<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(x.ncols());
    for (row, &wi) in x.outer_iter().zip(w.iter()) {
        if wi != 0.0 {
            out.scaled_add(wi, &row);
        }
    }
    out
}

pub(crate) fn residuals_from_eta(y: ArrayView1<f64>, eta: ArrayView1<f64>, sigma: f64) -> Array1<f64> {
    let mut e = &y - &eta;
    e /= sigma;
    e
}

/// `-(1/n) * sum_i [delta_i (-log sigma + e_i) - exp(e_i)]` evaluated from residuals.
///
/// Returns `f64::INFINITY` when any residual exceeds [`RESIDUAL_OVERFLOW_LIMIT`].
pub(crate) fn nll_from_residuals(residuals: ArrayView1<f64>, events: &[bool], sigma: f64) -> f64 {
    let log_sigma = sigma.ln();
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
    -total / residuals.len() as f64
}

pub(crate) fn nll_from_eta(data: &SurvivalDataset, eta: ArrayView1<f64>, sigma: f64) -> f64 {
    let e = residuals_from_eta(data.log_times.view(), eta, sigma);
    nll_from_residuals(e.view(), &data.events, sigma)
}

/// Gradient of the normalized negative log-likelihood with respect to beta only,
/// `-(1/(n sigma)) X^T (exp(e) - delta)`.
pub(crate) fn beta_gradient_from_eta(data: &SurvivalDataset, eta: ArrayView1<f64>, sigma: f64) -> Result<Array1<f64>> {
    let e = residuals_from_eta(data.log_times.view(), eta, sigma);
    let mut w = Array1::zeros(e.len());
    for (i, (&ei, &d)) in e.iter().zip(&data.events).enumerate() {
        if ei > RESIDUAL_OVERFLOW_LIMIT || ei.is_nan() {
            return Err(AftError::DivergedEvaluation { residual: ei });
        }
        w[i] = ei.exp() - if d { 1.0 } else { 0.0 };
    }
    let scale = -1.0 / (data.n_samples() as f64 * sigma);
    Ok(xt_mul(data.features.view(), w.view()) * scale)
}

/// Normalized negative log-likelihood `l_n(theta)`.
///
/// A residual above [`RESIDUAL_OVERFLOW_LIMIT`] yields `+inf` (a diverged
/// evaluation); callers doing line searches treat it as a rejected step.
pub fn neg_log_likelihood(params: &ModelParams, data: &SurvivalDataset) -> Result<f64> {
    let e = standardized_residuals(params, data)?;
    Ok(nll_from_residuals(e.view(), &data.events, params.sigma))
}

/// Gradient of `l_n` with respect to `(beta, sigma)`; the last entry is the sigma component.
pub fn gradient(params: &ModelParams, data: &SurvivalDataset) -> Result<Array1<f64>> {
    let e = standardized_residuals(params, data)?;
    let (n, p) = data.features.dim();
    let sigma = params.sigma;
    let mut w = Array1::zeros(n);
    let mut sigma_sum = 0.0;
    for (i, (&ei, &d)) in e.iter().zip(&data.events).enumerate() {
        if ei > RESIDUAL_OVERFLOW_LIMIT || ei.is_nan() {
            return Err(AftError::DivergedEvaluation { residual: ei });
        }
        let ex = ei.exp();
        let di = if d { 1.0 } else { 0.0 };
        w[i] = ex - di;
        sigma_sum += di * (-1.0 - ei) + ei * ex;
    }
    let scale = -1.0 / (n as f64 * sigma);
    let mut grad = Array1::zeros(p + 1);
    grad.slice_mut(s![..p]).assign(&(xt_mul(data.features.view(), w.view()) * scale));
    grad[p] = sigma_sum * scale;
    Ok(grad)
}

/// Observed information `-d^2 l / d theta^2` of the raw log-likelihood, `(p+1) x (p+1)`.
///
/// The cross and scale entries embed the raw score `dl/dbeta_j` and `dl/dsigma`
/// (not the normalized gradient), so `observed_information / n` is the Hessian
/// of [`neg_log_likelihood`].
pub fn observed_information(params: &ModelParams, data: &SurvivalDataset) -> Result<Array2<f64>> {
    let e = standardized_residuals(params, data)?;
    let (n, p) = data.features.dim();
    let sigma = params.sigma;
    let x = &data.features;

    let mut ex = Array1::zeros(n);
    for (i, &ei) in e.iter().enumerate() {
        if ei > RESIDUAL_OVERFLOW_LIMIT || ei.is_nan() {
            return Err(AftError::DivergedEvaluation { residual: ei });
        }
        ex[i] = ei.exp();
    }
    let delta: Array1<f64> = data.events.iter().map(|&d| if d { 1.0 } else { 0.0 }).collect();

    // raw score components
    let score_beta = xt_mul(x.view(), (&ex - &delta).view()) / sigma;
    let score_sigma: f64 = (0..n)
        .map(|i| delta[i] * (-1.0 - e[i]) + e[i] * ex[i])
        .sum::<f64>()
        / sigma;

    let sigma2 = sigma * sigma;
    let mut info = Array2::zeros((p + 1, p + 1));
    let weighted = x * &ex.view().insert_axis(Axis(1));
    let beta_block = x.t().dot(&weighted) / sigma2;
    info.slice_mut(s![..p, ..p]).assign(&beta_block);
    // symmetrize explicitly so the result is exactly symmetric
    for j in 0..p {
        for k in (j + 1)..p {
            let v = info[[j, k]];
            info[[k, j]] = v;
        }
    }

    let e_ex = &e * &ex;
    let cross = xt_mul(x.view(), e_ex.view()) / sigma2 + &score_beta / sigma;
    for j in 0..p {
        info[[j, p]] = cross[j];
        info[[p, j]] = cross[j];
    }
    let ss: f64 = (0..n).map(|i| e[i] * e[i] * ex[i] + delta[i]).sum();
    info[[p, p]] = ss / sigma2 + 2.0 / sigma * score_sigma;
    Ok(info)
}

/// Largest eigenvalue of the normalized beta-block Hessian, with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzBound {
    pub value: f64,
    /// `false` when power iteration failed and the Frobenius norm was used instead.
    pub from_power_iteration: bool,
    pub iterations: usize,
}

const POWER_TOL: f64 = 1e-13;
const POWER_MAX_ITER: usize = 20_000;

/// Largest eigenvalue of `(1/n) * (1/sigma^2) X^T diag(exp(e)) X`, the beta-block of
/// the Hessian of `l_n`. Uses matrix-free power iteration; falls back to the
/// Frobenius norm of the dense block (an upper bound) if that does not converge.
pub fn lipschitz_bound(params: &ModelParams, data: &SurvivalDataset) -> Result<LipschitzBound> {
    let e = standardized_residuals(params, data)?;
    let mut w = Array1::zeros(e.len());
    for (i, &ei) in e.iter().enumerate() {
        if ei > RESIDUAL_OVERFLOW_LIMIT || ei.is_nan() {
            return Err(AftError::DivergedEvaluation { residual: ei });
        }
        w[i] = ei.exp();
    }
    let n = data.n_samples() as f64;
    w /= n * params.sigma * params.sigma;
    let x = &data.features;
    let est = power_iteration(
        x.ncols(),
        |v| {
            let xv = x.dot(v);
            xt_mul(x.view(), (&xv * &w).view())
        },
        POWER_TOL,
        POWER_MAX_ITER,
    );
    let floor = f64::EPSILON;
    if est.converged {
        return Ok(LipschitzBound {
            value: est.value.max(floor),
            from_power_iteration: true,
            iterations: est.iterations,
        });
    }
    let weighted = x * &w.view().insert_axis(Axis(1));
    let block = x.t().dot(&weighted);
    let frob = block.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(LipschitzBound {
        value: frob.max(floor),
        from_power_iteration: false,
        iterations: est.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn one_subject(x: f64, y: f64, event: bool) -> SurvivalDataset {
        SurvivalDataset::new(array![[x]], array![y], vec![event]).unwrap()
    }

    #[test]
    fn residuals_identity_at_zero_beta() {
        let data = SurvivalDataset::new(array![[1.0], [2.0]], array![0.5, -0.2], vec![true, false]).unwrap();
        let params = ModelParams::zeros(1, 1.0).unwrap();
        let e = standardized_residuals(&params, &data).unwrap();
        assert_eq!(e, array![0.5, -0.2]);
    }

    #[test]
    fn residual_forced_by_formula() {
        let data = one_subject(3.0, 5.0, true);
        let params = ModelParams::new(array![1.0], 2.0).unwrap();
        assert_eq!(standardized_residuals(&params, &data).unwrap()[0], 1.0);
    }

    #[test]
    fn residuals_dimension_mismatch_names_sizes() {
        let data = one_subject(3.0, 5.0, true);
        let params = ModelParams::new(array![1.0, 2.0], 2.0).unwrap();
        match standardized_residuals(&params, &data) {
            Err(AftError::DimensionMismatch { expected, found, .. }) => {
                assert_eq!((expected, found), (1, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nll_zero_residual_event_and_censored() {
        let params = ModelParams::zeros(1, 1.0).unwrap();
        assert_eq!(neg_log_likelihood(&params, &one_subject(0.0, 0.0, true)).unwrap(), 1.0);
        // a lone censored subject is not a valid dataset; score its term directly
        assert_eq!(nll_from_residuals(array![0.0].view(), &[false], 1.0), 1.0);
        let pair = SurvivalDataset::new(array![[0.0], [0.0]], array![0.0, 0.0], vec![true, false]).unwrap();
        assert_eq!(neg_log_likelihood(&params, &pair).unwrap(), 1.0);
    }

    #[test]
    fn nll_scalar_substitution() {
        // e = 2 log 2, l = -log 0.5 + 2 log 2 - 4 = 3 log 2 - 4
        let params = ModelParams::zeros(1, 0.5).unwrap();
        let data = one_subject(0.0, 2f64.ln(), true);
        let expected = 4.0 - 3.0 * 2f64.ln();
        assert!((neg_log_likelihood(&params, &data).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 1.92056).abs() < 1e-5);
    }

    #[test]
    fn nll_overflow_is_infinite_sentinel() {
        let params = ModelParams::zeros(1, 1.0).unwrap();
        let data = one_subject(0.0, 701.0, true);
        assert_eq!(neg_log_likelihood(&params, &data).unwrap(), f64::INFINITY);
        assert!(matches!(gradient(&params, &data), Err(AftError::DivergedEvaluation { .. })));
    }

    #[test]
    fn gradient_at_zero_residual() {
        let params = ModelParams::new(array![0.5], 1.0).unwrap();
        let data = one_subject(2.0, 1.0, true);
        let g = gradient(&params, &data).unwrap();
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1], 1.0);
    }

    #[test]
    fn beta_gradient_vanishes_at_stationary_construction() {
        // all events, sigma = 1, y = 0: exp(e_i) = 1 = delta_i for every subject
        let x = array![[1.0, -2.0], [0.5, 3.0], [-1.5, 0.25]];
        let data = SurvivalDataset::new(x, array![0.0, 0.0, 0.0], vec![true; 3]).unwrap();
        let g = gradient(&ModelParams::zeros(2, 1.0).unwrap(), &data).unwrap();
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn information_scalar_case() {
        let params = ModelParams::zeros(1, 1.0).unwrap();
        let info = observed_information(&params, &one_subject(1.0, 0.0, true)).unwrap();
        assert_eq!(info[[0, 0]], 1.0);
        assert_eq!(info[[0, 1]], 0.0);
        // (e^2 exp(e) + delta) + 2 * dl/dsigma = 1 + 2 * (-1)
        assert_eq!(info[[1, 1]], -1.0);
    }

    #[test]
    fn lipschitz_scalar_case() {
        let params = ModelParams::zeros(1, 1.0).unwrap();
        let bound = lipschitz_bound(&params, &one_subject(1.0, 0.0, true)).unwrap();
        assert!((bound.value - 1.0).abs() < 1e-12);
        assert!(bound.from_power_iteration);
    }

    #[test]
    fn lipschitz_diagonal_block() {
        // single subject at e = 0 with x = (sqrt 2, sqrt 5, 1) has rank one;
        // three orthogonal subjects give diag(2, 5, 1) / n, so scale by n = 3.
        let s3 = 3f64.sqrt();
        let x = array![[2f64.sqrt() * s3, 0.0, 0.0], [0.0, 5f64.sqrt() * s3, 0.0], [0.0, 0.0, s3]];
        let data = SurvivalDataset::new(x, array![0.0, 0.0, 0.0], vec![true; 3]).unwrap();
        let bound = lipschitz_bound(&ModelParams::zeros(3, 1.0).unwrap(), &data).unwrap();
        assert!((bound.value - 5.0).abs() < 1e-9);
    }

    #[test]
    fn dataset_rejects_all_censored_and_nonfinite() {
        assert!(SurvivalDataset::new(array![[1.0]], array![0.0], vec![false]).is_err());
        assert!(SurvivalDataset::new(array![[1.0]], array![f64::NAN], vec![true]).is_err());
        assert!(SurvivalDataset::new(array![[1.0], [2.0]], array![0.0], vec![true]).is_err());
    }

    #[test]
    fn censoring_flip_drops_density_term() {
        let x = array![[0.3, -1.0], [1.2, 0.4], [-0.7, 0.9]];
        let y = array![0.2, -0.5, 1.1];
        let params = ModelParams::new(array![0.4, -0.3], 0.8).unwrap();
        let a = SurvivalDataset::new(x.clone(), y.clone(), vec![true, true, true]).unwrap();
        let b = SurvivalDataset::new(x, y, vec![true, false, true]).unwrap();
        let e = standardized_residuals(&params, &a).unwrap();
        let n = 3.0;
        let la = -n * neg_log_likelihood(&params, &a).unwrap();
        let lb = -n * neg_log_likelihood(&params, &b).unwrap();
        let expected = -(-(0.8f64).ln() + e[1]);
        assert!((lb - la - expected).abs() < 1e-12);
    }

    #[test]
    fn intercept_absorbs_location_shift() {
        let x = array![[0.3, -1.0], [1.2, 0.4], [-0.7, 0.9], [0.1, 0.1]];
        let y = array![0.2, -0.5, 1.1, 0.0];
        let data = SurvivalDataset::new(x.clone(), y.clone(), vec![true, false, true, true])
            .unwrap()
            .with_intercept();
        let shifted = SurvivalDataset::new(x, y + 2.5, vec![true, false, true, true])
            .unwrap()
            .with_intercept();
        let p0 = ModelParams::new(array![0.7, 0.4, -0.3], 1.3).unwrap();
        let p1 = ModelParams::new(array![3.2, 0.4, -0.3], 1.3).unwrap();
        let a = neg_log_likelihood(&p0, &data).unwrap();
        let b = neg_log_likelihood(&p1, &shifted).unwrap();
        assert!((a - b).abs() < 1e-14);
        assert_eq!(data.n_features(), 2);
        assert_eq!(data.n_columns(), 3);
    }
}
