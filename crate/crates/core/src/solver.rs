//! Proximal gradient descent (ISTA with backtracking) for
//!
//! ```text
//! min_beta  l_n(beta; sigma_hat) + lambda (1 - alpha) beta^T L beta + lambda alpha |beta|_1
//! ```
//!
//! The smooth part `f` is the normalized negative log-likelihood plus the
//! Laplacian quadratic; the lasso term is handled by soft-thresholding. The step
//! parameter `M` only grows during a fit (backtracking) and is carried from one
//! lambda to the next along a path.

use ndarray::{s, Array1, ArrayView1, Axis};

use crate::error::{AftError, Result};
use crate::network::{NetworkPrior, PenaltyConfig};
use crate::survival::{beta_gradient_from_eta, lipschitz_bound, nll_from_eta, ModelParams, SurvivalDataset};

/// Maximum number of `M` inflations within one line search.
pub const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Relative-change tolerance `|b_new - b| / max(1, |b|)`.
    pub tol: f64,
    /// Starting step parameter; computed from the Hessian at zero when absent.
    pub m_init: Option<f64>,
    pub backtrack_factor: f64,
    /// Apply the l1 term to the intercept too (only meaningful with an intercept column).
    pub penalize_intercept: bool,
    /// Scale covariates to unit sd (and center them when an intercept is present)
    /// before fitting; coefficients are reported on the original scale.
    pub standardize: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            tol: 1e-6,
            m_init: None,
            backtrack_factor: 2.0,
            penalize_intercept: false,
            standardize: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(AftError::InvalidParameter("max_iter must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(AftError::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.backtrack_factor > 1.0) {
            return Err(AftError::InvalidParameter(format!(
                "backtrack_factor must exceed 1, got {}",
                self.backtrack_factor
            )));
        }
        if let Some(m) = self.m_init {
            if !(m > 0.0 && m.is_finite()) {
                return Err(AftError::InvalidParameter(format!("m_init must be positive, got {m}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Covariate coefficients on the original feature scale (intercept excluded).
    pub beta_hat: Array1<f64>,
    pub intercept: Option<f64>,
    pub lambda: f64,
    pub alpha: f64,
    pub sigma_hat: f64,
    /// Full objective at the start point and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_m: f64,
}

impl FitResult {
    /// Coefficients aligned with the dataset's design columns (intercept first when present).
    pub fn coefficients(&self) -> Array1<f64> {
        match self.intercept {
            Some(b0) => {
                let mut full = Array1::zeros(self.beta_hat.len() + 1);
                full[0] = b0;
                full.slice_mut(s![1..]).assign(&self.beta_hat);
                full
            }
            None => self.beta_hat.clone(),
        }
    }

    pub fn nonzero_count(&self) -> usize {
        self.beta_hat.iter().filter(|&&b| b != 0.0).count()
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the starting objective")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath {
    pub alpha: f64,
    pub sigma_hat: f64,
    pub fits: Vec<FitResult>,
}

impl SolutionPath {
    pub fn lambdas(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.lambda).collect()
    }

    pub fn len(&self) -> usize {
        self.fits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fits.is_empty()
    }
}

#[inline]
fn soft(u: f64, t: f64) -> f64 {
    if u > t {
        u - t
    } else if u < -t {
        u + t
    } else {
        0.0
    }
}

/// Componentwise soft-thresholding, the proximal map of `t * |.|_1`.
pub fn soft_threshold(u: ArrayView1<f64>, t: f64) -> Result<Array1<f64>> {
    if !(t >= 0.0) {
        return Err(AftError::InvalidParameter(format!("threshold must be >= 0, got {t}")));
    }
    Ok(u.mapv(|v| soft(v, t)))
}

/// Column transform `x' = (x - center) / scale`.
struct Standardization {
    center: Array1<f64>,
    scale: Array1<f64>,
}

impl Standardization {
    fn fit(data: &SurvivalDataset) -> Self {
        let x = data.covariates();
        let n = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).expect("dataset has rows");
        let scale = Array1::from_iter(x.axis_iter(Axis(1)).zip(mean.iter()).map(|(col, &m)| {
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        }));
        // without an intercept, centering would change the model
        let center = if data.has_intercept() {
            mean
        } else {
            Array1::zeros(scale.len())
        };
        Self { center, scale }
    }

    fn apply(&self, data: &SurvivalDataset) -> SurvivalDataset {
        let mut x = data.features().to_owned();
        let offset = usize::from(data.has_intercept());
        for (j, mut col) in x.axis_iter_mut(Axis(1)).skip(offset).enumerate() {
            let (c, s) = (self.center[j], self.scale[j]);
            col.mapv_inplace(|v| (v - c) / s);
        }
        data.with_features(x)
    }

    /// Original-scale coefficients to the standardized problem's coefficients.
    fn forward(&self, full: ArrayView1<f64>, intercept: bool) -> Array1<f64> {
        let mut out = full.to_owned();
        let offset = usize::from(intercept);
        let mut shift = 0.0;
        for j in 0..self.scale.len() {
            shift += self.center[j] * full[offset + j];
            out[offset + j] = full[offset + j] * self.scale[j];
        }
        if intercept {
            out[0] += shift;
        }
        out
    }

    fn backward(&self, full: ArrayView1<f64>, intercept: bool) -> Array1<f64> {
        let mut out = full.to_owned();
        let offset = usize::from(intercept);
        let mut shift = 0.0;
        for j in 0..self.scale.len() {
            let b = full[offset + j] / self.scale[j];
            out[offset + j] = b;
            shift += self.center[j] * b;
        }
        if intercept {
            out[0] -= shift;
        }
        out
    }
}

/// The composite objective on one dataset, with the intercept (if any) at index 0.
struct Problem<'a> {
    data: &'a SurvivalDataset,
    prior: &'a NetworkPrior,
    cfg: PenaltyConfig,
    sigma: f64,
    offset: usize,
    l1_on_intercept: bool,
}

impl Problem<'_> {
    fn smooth(&self, beta: ArrayView1<f64>, eta: ArrayView1<f64>) -> f64 {
        let nll = nll_from_eta(self.data, eta, self.sigma);
        let w = self.cfg.quadratic_weight();
        if w == 0.0 || !nll.is_finite() {
            return nll;
        }
        nll + w * self.prior.quadratic_form(beta.slice(s![self.offset..]))
    }

    fn smooth_gradient(&self, beta: ArrayView1<f64>, eta: ArrayView1<f64>) -> Result<Array1<f64>> {
        let mut g = beta_gradient_from_eta(self.data, eta, self.sigma)?;
        let w = self.cfg.quadratic_weight();
        if w != 0.0 {
            let lb = self.prior.laplacian_mul(beta.slice(s![self.offset..]));
            g.slice_mut(s![self.offset..]).scaled_add(2.0 * w, &lb);
        }
        Ok(g)
    }

    fn is_thresholded(&self, j: usize) -> bool {
        j >= self.offset || self.l1_on_intercept
    }

    fn nonsmooth(&self, beta: ArrayView1<f64>) -> f64 {
        let l1: f64 = beta
            .iter()
            .enumerate()
            .filter(|&(j, _)| self.is_thresholded(j))
            .map(|(_, b)| b.abs())
            .sum();
        self.cfg.l1_weight() * l1
    }

    fn prox_step(&self, beta: ArrayView1<f64>, grad: ArrayView1<f64>, m: f64) -> Array1<f64> {
        let step = 1.0 / m;
        let t = self.cfg.l1_weight() * step;
        Array1::from_iter(beta.iter().zip(grad.iter()).enumerate().map(|(j, (&b, &g))| {
            let u = b - step * g;
            if self.is_thresholded(j) {
                soft(u, t)
            } else {
                u
            }
        }))
    }

    fn initial_m(&self) -> Result<f64> {
        let zero = ModelParams::zeros(self.data.n_columns(), self.sigma)?;
        let hess = lipschitz_bound(&zero, self.data)?.value;
        let quad = 2.0 * self.cfg.quadratic_weight() * self.prior.laplacian_max_eigenvalue();
        Ok(hess + quad)
    }
}

fn check_inputs(data: &SurvivalDataset, prior: &NetworkPrior, sigma_hat: f64) -> Result<()> {
    if prior.dim() != data.n_features() {
        return Err(AftError::DimensionMismatch {
            what: "network dimension vs covariates",
            expected: data.n_features(),
            found: prior.dim(),
        });
    }
    if !(sigma_hat > 0.0 && sigma_hat.is_finite()) {
        return Err(AftError::InvalidParameter(format!("sigma_hat must be positive, got {sigma_hat}")));
    }
    Ok(())
}

/// Solves the penalized problem at one `(lambda, alpha)` from `beta_init`.
///
/// `beta_init` is aligned with the dataset's design columns (intercept first when
/// present) and given on the original feature scale.
pub fn prox_grad_fit(
    data: &SurvivalDataset,
    prior: &NetworkPrior,
    cfg: &PenaltyConfig,
    sigma_hat: f64,
    beta_init: ArrayView1<f64>,
    opts: &SolverOptions,
) -> Result<FitResult> {
    opts.validate()?;
    check_inputs(data, prior, sigma_hat)?;
    if beta_init.len() != data.n_columns() {
        return Err(AftError::DimensionMismatch {
            what: "beta_init length vs design columns",
            expected: data.n_columns(),
            found: beta_init.len(),
        });
    }
    let intercept = data.has_intercept();

    let standardization = opts.standardize.then(|| Standardization::fit(data));
    let owned;
    let (work_data, start) = match &standardization {
        Some(st) => {
            owned = st.apply(data);
            (&owned, st.forward(beta_init, intercept))
        }
        None => (data, beta_init.to_owned()),
    };

    let problem = Problem {
        data: work_data,
        prior,
        cfg: *cfg,
        sigma: sigma_hat,
        offset: usize::from(intercept),
        l1_on_intercept: opts.penalize_intercept,
    };

    let x = work_data.features();
    let mut beta = start;
    let mut eta = x.dot(&beta);
    let mut f = problem.smooth(beta.view(), eta.view());
    if !f.is_finite() {
        return Err(AftError::NonFiniteStart);
    }
    let mut objective = f + problem.nonsmooth(beta.view());
    let mut trace = vec![objective];
    let mut m = match opts.m_init {
        Some(m) => m,
        None => problem.initial_m()?,
    };

    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let grad = problem.smooth_gradient(beta.view(), eta.view())?;
        let mut backtracks = 0;
        let (next, next_eta, next_f) = loop {
            let cand = problem.prox_step(beta.view(), grad.view(), m);
            let diff = &cand - &beta;
            let cand_eta = x.dot(&cand);
            let cand_f = problem.smooth(cand.view(), cand_eta.view());
            let d2 = diff.dot(&diff);
            // rounding slack so the test does not fail spuriously once steps are tiny
            let slack = 4.0 * f64::EPSILON * f.abs().max(1.0);
            let model = f + grad.dot(&diff) + 0.5 * m * d2;
            if d2 == 0.0 || (cand_f.is_finite() && cand_f <= model + slack) {
                break (cand, cand_eta, cand_f);
            }
            // Once f(cand) - f(beta) is below the rounding error of the likelihood sum
            // the test above fails on noise alone. For convex f,
            // f(cand) - f(beta) - <grad, d> <= <grad(cand) - grad, d>, so bounding the
            // right side by m/2 |d|^2 certifies the same decrease without cancellation.
            if cand_f.is_finite() {
                let cand_grad = problem.smooth_gradient(cand.view(), cand_eta.view())?;
                if (&cand_grad - &grad).dot(&diff) <= 0.5 * m * d2 {
                    break (cand, cand_eta, cand_f);
                }
            }
            backtracks += 1;
            if backtracks > MAX_BACKTRACKS {
                return Err(AftError::StepCollapse {
                    doublings: MAX_BACKTRACKS,
                    m,
                });
            }
            m *= opts.backtrack_factor;
        };
        iterations += 1;

        let diff = &next - &beta;
        let change = diff.dot(&diff).sqrt() / beta.dot(&beta).sqrt().max(1.0);
        let next_objective = next_f + problem.nonsmooth(next.view());
        // sufficient decrease plus prox optimality make every accepted step a descent step
        debug_assert!(
            next_objective <= objective + 1e-12 * objective.abs().max(1.0),
            "objective rose from {objective} to {next_objective}"
        );
        objective = next_objective;
        trace.push(objective);
        beta = next;
        eta = next_eta;
        f = next_f;
        if change <= opts.tol {
            converged = true;
            break;
        }
    }

    let full = match &standardization {
        Some(st) => st.backward(beta.view(), intercept),
        None => beta,
    };
    let (intercept_value, beta_hat) = if intercept {
        (Some(full[0]), full.slice(s![1..]).to_owned())
    } else {
        (None, full)
    };
    Ok(FitResult {
        beta_hat,
        intercept: intercept_value,
        lambda: cfg.lambda(),
        alpha: cfg.alpha(),
        sigma_hat,
        objective_trace: trace,
        iterations,
        converged,
        final_m: m,
    })
}

/// Solution at `lambda = lambda_max`: all covariate coefficients zero and, when the
/// design has an intercept, the intercept at its closed-form optimum for fixed
/// `sigma`, `b0 = sigma * log(sum_i exp(y_i / sigma) / n_events)`.
pub fn null_coefficients(data: &SurvivalDataset, sigma: f64) -> Array1<f64> {
    let mut beta = Array1::zeros(data.n_columns());
    if data.has_intercept() {
        let scaled = data.log_times().mapv(|y| y / sigma);
        let top = scaled.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = top + scaled.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
        beta[0] = sigma * (lse - (data.n_events() as f64).ln());
    }
    beta
}

/// Fits a decreasing `lambda` grid with warm starts, carrying `M` forward.
pub fn fit_path(
    data: &SurvivalDataset,
    prior: &NetworkPrior,
    alpha: f64,
    grid: &[f64],
    sigma_hat: f64,
    opts: &SolverOptions,
) -> Result<SolutionPath> {
    if grid.is_empty() {
        return Err(AftError::InvalidParameter("lambda grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(AftError::InvalidParameter("lambda grid must be strictly decreasing".into()));
    }
    check_inputs(data, prior, sigma_hat)?;
    let mut fits: Vec<FitResult> = Vec::with_capacity(grid.len());
    let mut warm = null_coefficients(data, sigma_hat);
    let mut step_opts = opts.clone();
    for (index, &lambda) in grid.iter().enumerate() {
        let annotate = |source| AftError::AtLambda {
            index,
            source: Box::new(source),
        };
        let cfg = PenaltyConfig::new(lambda, alpha).map_err(annotate)?;
        let fit = prox_grad_fit(data, prior, &cfg, sigma_hat, warm.view(), &step_opts).map_err(annotate)?;
        warm = fit.coefficients();
        step_opts.m_init = Some(fit.final_m);
        fits.push(fit);
    }
    Ok(SolutionPath {
        alpha,
        sigma_hat,
        fits,
    })
}
