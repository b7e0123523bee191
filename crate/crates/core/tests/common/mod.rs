//! Instance generators and independent reference implementations shared by the
//! integration tests. Nothing here calls into the crate's likelihood or solver code.
#![allow(dead_code)]

use aftnet::network::{Adjacency, NetworkPrior};
use aftnet::solver::FitResult;
use aftnet::{build_laplacian, SurvivalDataset};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian design, Gumbel-min errors, independent censoring of roughly
/// `censor_frac` of the subjects; at least one event is kept.
pub fn random_dataset(seed: u64, n: usize, p: usize, sigma: f64, censor_frac: f64) -> (SurvivalDataset, Array1<f64>) {
    let mut r = rng(seed);
    let x = Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut r));
    let beta: Array1<f64> = (0..p).map(|_| r.random_range(-0.8..0.8)).collect();
    let eta = x.dot(&beta);
    let mut y = Array1::zeros(n);
    let mut events = vec![true; n];
    for i in 0..n {
        let u: f64 = r.random_range(1e-12..1.0);
        let log_t = eta[i] + sigma * (-u.ln()).ln();
        if r.random::<f64>() < censor_frac {
            // censored somewhere before the event
            y[i] = log_t - r.random_range(0.0..1.5);
            events[i] = false;
        } else {
            y[i] = log_t;
        }
    }
    if !events.iter().any(|&d| d) {
        events[0] = true;
    }
    (SurvivalDataset::new(x, y, events).unwrap(), beta)
}

/// Random undirected graph with edge probability `density` and weights in [0.5, 2).
pub fn random_prior(seed: u64, p: usize, density: f64) -> NetworkPrior {
    let mut r = rng(seed ^ 0x9e37_79b9);
    let mut edges = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            if r.random::<f64>() < density {
                edges.push((i, j, r.random_range(0.5..2.0)));
            }
        }
    }
    build_laplacian(&Adjacency::from_edges(p, edges).unwrap()).unwrap()
}

pub fn dense_laplacian(p: usize, edges: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(p, p);
    for &(i, j, w) in edges {
        l[(i, j)] -= w;
        l[(j, i)] -= w;
        l[(i, i)] += w;
        l[(j, j)] += w;
    }
    l
}

pub fn to_na(x: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[[i, j]])
}

/// Reference negative log-likelihood (normalized), beta gradient and beta Hessian at
/// fixed sigma, written directly from the Weibull AFT density.
pub struct RefModel {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub delta: DVector<f64>,
    pub sigma: f64,
}

impl RefModel {
    pub fn new(data: &SurvivalDataset, sigma: f64) -> Self {
        let x = to_na(&data.features().to_owned());
        let y = DVector::from_iterator(data.n_samples(), data.log_times().iter().copied());
        let delta = DVector::from_iterator(data.n_samples(), data.events().iter().map(|&d| f64::from(u8::from(d))));
        Self { x, y, delta, sigma }
    }

    fn n(&self) -> f64 {
        self.y.len() as f64
    }

    fn resid(&self, beta: &DVector<f64>) -> DVector<f64> {
        (&self.y - &self.x * beta) / self.sigma
    }

    pub fn loss(&self, beta: &DVector<f64>) -> f64 {
        let e = self.resid(beta);
        let ll: f64 = (0..e.len())
            .map(|i| self.delta[i] * (e[i] - self.sigma.ln()) - e[i].exp())
            .sum();
        -ll / self.n()
    }

    pub fn grad(&self, beta: &DVector<f64>) -> DVector<f64> {
        let e = self.resid(beta);
        let w = DVector::from_fn(e.len(), |i, _| e[i].exp() - self.delta[i]);
        -(self.x.transpose() * w) / (self.n() * self.sigma)
    }

    pub fn hess(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let e = self.resid(beta);
        let mut xw = self.x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= e[i].exp();
        }
        self.x.transpose() * xw / (self.n() * self.sigma * self.sigma)
    }

    /// Damped Newton with step halving on the unpenalized loss.
    pub fn newton_mle(&self) -> DVector<f64> {
        let p = self.x.ncols();
        let mut beta = DVector::zeros(p);
        let mut f = self.loss(&beta);
        for _ in 0..200 {
            let g = self.grad(&beta);
            if g.amax() < 1e-13 {
                break;
            }
            let step = self.hess(&beta).cholesky().expect("positive definite").solve(&g);
            let mut t = 1.0;
            loop {
                let cand = &beta - &step * t;
                let fc = self.loss(&cand);
                if fc.is_finite() && fc <= f {
                    beta = cand;
                    f = fc;
                    break;
                }
                t *= 0.5;
                assert!(t > 1e-20, "line search failed");
            }
        }
        beta
    }
}

pub fn to_dvec(v: &Array1<f64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().copied())
}

pub fn assert_descent(fit: &FitResult) {
    for w in fit.objective_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "objective rose from {} to {} at lambda {}", w[0], w[1], fit.lambda);
    }
}

/// Pair-by-pair Harrell concordance with rationals kept as (numerator, denominator).
pub fn brute_c_index(risks: &[f64], times: &[f64], events: &[bool]) -> Option<(u64, u64)> {
    let n = risks.len();
    let (mut num2, mut den) = (0u64, 0u64);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            // orient the pair so that `a` has the shorter time
            let (a, b) = if times[i] < times[j] { (i, j) } else { continue };
            if !events[a] {
                continue;
            }
            den += 1;
            num2 += match risks[a].partial_cmp(&risks[b]).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    (den > 0).then_some((num2, 2 * den))
}
