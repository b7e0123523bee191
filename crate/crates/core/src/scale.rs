//! Intercept-only Weibull AFT fit giving the scale estimate used by the penalized solver.

use std::f64::consts::PI;

use ndarray::{array, Array2};

use crate::error::{AftError, Result};
use crate::survival::{gradient, neg_log_likelihood, observed_information, ModelParams, SurvivalDataset};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;
const LOG_SIGMA_FLOOR: f64 = -20.0;
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleFit {
    /// Location on the log-time scale.
    pub mu_hat: f64,
    pub sigma_hat: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct InterceptModel {
    data: SurvivalDataset,
}

impl InterceptModel {
    fn new(data: &SurvivalDataset) -> Result<Self> {
        let ones = Array2::ones((data.n_samples(), 1));
        let data = SurvivalDataset::new(ones, data.log_times().to_owned(), data.events().to_vec())?;
        Ok(Self { data })
    }

    fn params(&self, mu: f64, log_sigma: f64) -> Result<ModelParams> {
        ModelParams::new(array![mu], log_sigma.exp())
    }

    /// `+inf` where `sigma` under- or overflows, so the line search rejects the point.
    fn objective(&self, mu: f64, log_sigma: f64) -> Result<f64> {
        let sigma = log_sigma.exp();
        if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
            return Ok(f64::INFINITY);
        }
        neg_log_likelihood(&self.params(mu, log_sigma)?, &self.data)
    }

    /// Gradient and Hessian of the normalized objective in `(mu, log sigma)`.
    fn derivatives(&self, mu: f64, log_sigma: f64) -> Result<([f64; 2], [[f64; 2]; 2])> {
        let params = self.params(mu, log_sigma)?;
        let sigma = params.sigma();
        let g = gradient(&params, &self.data)?;
        let info = observed_information(&params, &self.data)?;
        let n = self.data.n_samples() as f64;
        let grad = [g[0], sigma * g[1]];
        let h_mm = info[[0, 0]] / n;
        let h_ms = sigma * info[[0, 1]] / n;
        let h_ss = sigma * sigma * info[[1, 1]] / n + sigma * g[1];
        Ok((grad, [[h_mm, h_ms], [h_ms, h_ss]]))
    }
}

/// Maximum-likelihood `(mu, sigma)` of the intercept-only model by damped Newton on
/// `(mu, log sigma)`.
pub fn estimate_sigma(data: &SurvivalDataset, tol: f64, max_iter: usize) -> Result<ScaleFit> {
    if !(tol > 0.0) {
        return Err(AftError::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let event_times: Vec<f64> = data
        .log_times()
        .iter()
        .zip(data.events())
        .filter(|(_, &d)| d)
        .map(|(&y, _)| y)
        .collect();
    let m = event_times.len() as f64;
    let mean = event_times.iter().sum::<f64>() / m;
    let var = if event_times.len() > 1 {
        event_times.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    if var <= 0.0 {
        return Err(AftError::DegenerateScale { floor: LOG_SIGMA_FLOOR });
    }

    let model = InterceptModel::new(data)?;
    // Gumbel moment matching: sd = sigma * pi / sqrt(6)
    let mut mu = mean;
    let mut log_sigma = (var.sqrt() * 6f64.sqrt() / PI).ln();
    let mut value = model.objective(mu, log_sigma)?;
    let mut iterations = 0;

    for iter in 0..=max_iter {
        let (g, h) = model.derivatives(mu, log_sigma)?;
        if g[0].abs().max(g[1].abs()) <= tol {
            return Ok(ScaleFit {
                mu_hat: mu,
                sigma_hat: log_sigma.exp(),
                iterations: iter,
                converged: true,
            });
        }
        if iter == max_iter {
            break;
        }
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let step = if h[0][0] > 0.0 && det > 0.0 {
            [
                -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
                -(h[0][0] * g[1] - h[1][0] * g[0]) / det,
            ]
        } else {
            [-g[0], -g[1]]
        };

        let mut t = 1.0;
        let mut accepted = false;
        // near the optimum a Newton step cannot lower the objective in floating point
        let slack = 4.0 * f64::EPSILON * value.abs().max(1.0);
        for _ in 0..=MAX_HALVINGS {
            let cand_mu = mu + t * step[0];
            let cand_ls = log_sigma + t * step[1];
            let cand = model.objective(cand_mu, cand_ls)?;
            if cand.is_finite() && cand <= value + slack {
                mu = cand_mu;
                log_sigma = cand_ls;
                value = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if log_sigma < LOG_SIGMA_FLOOR {
            return Err(AftError::DegenerateScale { floor: LOG_SIGMA_FLOOR });
        }
        iterations = iter + 1;
        if !accepted {
            break;
        }
    }
    Err(AftError::ScaleNotConverged {
        iterations,
        mu,
        sigma: log_sigma.exp(),
    })
}
