//! Estimation, selection and prediction metrics against a known truth, the
//! selection ROC along a path, and Harrell's concordance index.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{AftError, Result};
use crate::solver::SolutionPath;
use crate::synthetic::GroundTruth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionCounts {
    pub p: usize,
    pub p_active: usize,
    pub selected: usize,
    pub true_positives: usize,
    pub false_negatives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `|beta* - beta_hat|_2`, not squared.
    pub emse: f64,
    /// `|X_test (beta* - beta_hat)|_2^2 / n_test`.
    pub pmse: f64,
    pub fnr: f64,
    pub fpr: f64,
    pub nsr: f64,
    pub counts: SelectionCounts,
}

fn selection_counts(beta_hat: ArrayView1<f64>, truth: &GroundTruth) -> Result<SelectionCounts> {
    let p = truth.p();
    if beta_hat.len() != p {
        return Err(AftError::DimensionMismatch {
            what: "estimated vs true coefficients",
            expected: p,
            found: beta_hat.len(),
        });
    }
    let mut c = SelectionCounts {
        p,
        p_active: 0,
        selected: 0,
        true_positives: 0,
        false_negatives: 0,
        false_positives: 0,
        true_negatives: 0,
    };
    for (&b, &s) in beta_hat.iter().zip(&truth.beta_star) {
        match (b != 0.0, s != 0.0) {
            (true, true) => c.true_positives += 1,
            (false, true) => c.false_negatives += 1,
            (true, false) => c.false_positives += 1,
            (false, false) => c.true_negatives += 1,
        }
    }
    c.p_active = c.true_positives + c.false_negatives;
    c.selected = c.true_positives + c.false_positives;
    if c.p_active == 0 || c.p_active == p {
        return Err(AftError::InvalidParameter(format!(
            "selection rates need 0 < p_active < p, got p_active = {} with p = {p}",
            c.p_active
        )));
    }
    Ok(c)
}

impl SelectionCounts {
    fn fnr(&self) -> f64 {
        self.false_negatives as f64 / self.p_active as f64
    }

    fn fpr(&self) -> f64 {
        self.false_positives as f64 / (self.p - self.p_active) as f64
    }
}

pub fn selection_metrics(beta_hat: ArrayView1<f64>, truth: &GroundTruth, x_test: &Array2<f64>) -> Result<MetricsReport> {
    let counts = selection_counts(beta_hat, truth)?;
    if x_test.ncols() != truth.p() {
        return Err(AftError::DimensionMismatch {
            what: "test design columns vs coefficients",
            expected: truth.p(),
            found: x_test.ncols(),
        });
    }
    if x_test.nrows() == 0 {
        return Err(AftError::InvalidData("test design has no rows".into()));
    }
    let diff = truth.beta() - beta_hat;
    let emse = diff.dot(&diff).sqrt();
    let pred = x_test.dot(&diff);
    let pmse = pred.dot(&pred) / x_test.nrows() as f64;
    Ok(MetricsReport {
        emse,
        pmse,
        fnr: counts.fnr(),
        fpr: counts.fpr(),
        nsr: counts.selected as f64 / counts.p as f64,
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// `None` for the two anchor points.
    pub lambda: Option<f64>,
}

/// One `(FPR, TPR)` point per fit in path order, framed by `(0, 0)` and `(1, 1)`.
pub fn selection_roc(path: &SolutionPath, truth: &GroundTruth) -> Result<Vec<RocPoint>> {
    selection_roc_points(path.fits.iter().map(|f| (f.lambda, f.beta_hat.view())), truth)
}

/// [`selection_roc`] over `(lambda, beta_hat)` pairs.
pub fn selection_roc_points<'a>(
    fits: impl IntoIterator<Item = (f64, ArrayView1<'a, f64>)>,
    truth: &GroundTruth,
) -> Result<Vec<RocPoint>> {
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, lambda: None }];
    for (lambda, beta) in fits {
        let c = selection_counts(beta, truth)?;
        points.push(RocPoint {
            fpr: c.fpr(),
            tpr: 1.0 - c.fnr(),
            lambda: Some(lambda),
        });
    }
    if points.len() == 1 {
        return Err(AftError::InvalidParameter("selection ROC needs a nonempty path".into()));
    }
    points.push(RocPoint { fpr: 1.0, tpr: 1.0, lambda: None });
    Ok(points)
}

/// Trapezoidal area under the curve after ordering points by `(fpr, tpr)`, so a
/// path whose FPR is not monotone in lambda still integrates as a step-free curve.
pub fn roc_auc(points: &[RocPoint]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|pt| (pt.fpr, pt.tpr)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1))
        .sum()
}

/// Harrell's C over pairs with `events[i]` and `times[i] < times[j]`; a pair is
/// concordant when `risks[i] > risks[j]`, and tied risks earn one half.
pub fn c_index(risks: ArrayView1<f64>, times: ArrayView1<f64>, events: &[bool]) -> Result<f64> {
    let n = risks.len();
    if times.len() != n || events.len() != n {
        return Err(AftError::DimensionMismatch {
            what: "risk scores vs times vs events",
            expected: n,
            found: if times.len() != n { times.len() } else { events.len() },
        });
    }
    let mut comparable = 0u64;
    // twice the concordance credit, kept integral
    let mut credit2 = 0u64;
    for i in (0..n).filter(|&i| events[i]) {
        for j in 0..n {
            if times[i] < times[j] {
                comparable += 1;
                credit2 += if risks[i] > risks[j] {
                    2
                } else if risks[i] == risks[j] {
                    1
                } else {
                    0
                };
            }
        }
    }
    if comparable == 0 {
        return Err(AftError::NoComparablePairs);
    }
    Ok(credit2 as f64 / (2 * comparable) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::FitResult;
    use ndarray::{array, Array1};

    fn truth(beta: Vec<f64>) -> GroundTruth {
        let active_set = beta.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, _)| j).collect();
        GroundTruth {
            module_map: vec![vec![0]; beta.len()],
            beta_star: beta,
            active_set,
            sigma_true: 1.0,
        }
    }

    fn fit(beta: Array1<f64>, lambda: f64) -> FitResult {
        FitResult {
            beta_hat: beta,
            intercept: None,
            lambda,
            alpha: 0.5,
            sigma_hat: 1.0,
            objective_trace: vec![0.0],
            iterations: 0,
            converged: true,
            final_m: 1.0,
        }
    }

    #[test]
    fn hand_counted_example() {
        let t = truth(vec![1.0, -1.0, 0.0, 0.0]);
        let x = Array2::eye(4);
        let m = selection_metrics(array![0.5, 0.0, 0.0, 0.2].view(), &t, &x).unwrap();
        assert!((m.emse - 1.29f64.sqrt()).abs() < 1e-15);
        assert!((m.pmse - 1.29 / 4.0).abs() < 1e-15);
        assert_eq!((m.fnr, m.fpr, m.nsr), (0.5, 0.5, 0.5));
        let c = m.counts;
        assert_eq!(c.true_positives + c.false_negatives, c.p_active);
        assert_eq!(c.false_positives + c.true_negatives, c.p - c.p_active);
    }

    #[test]
    fn exact_and_zero_estimates() {
        let t = truth(vec![0.3, -0.2, 0.0, 0.0, 0.0]);
        let x = Array2::from_shape_fn((3, 5), |(i, j)| (i + 2 * j) as f64);
        let exact = selection_metrics(t.beta().view(), &t, &x).unwrap();
        assert_eq!((exact.emse, exact.pmse, exact.fnr, exact.fpr), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(exact.nsr, 2.0 / 5.0);
        let zero = selection_metrics(Array1::zeros(5).view(), &t, &x).unwrap();
        assert_eq!((zero.fnr, zero.fpr, zero.nsr), (1.0, 0.0, 0.0));
        assert!((zero.emse - 0.13f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn metrics_reject_bad_shapes() {
        let t = truth(vec![1.0, 0.0]);
        assert!(selection_metrics(array![1.0].view(), &t, &Array2::eye(2)).is_err());
        assert!(selection_metrics(array![1.0, 0.0].view(), &t, &Array2::eye(3)).is_err());
        let all_active = truth(vec![1.0, 1.0]);
        assert!(selection_metrics(array![1.0, 0.0].view(), &all_active, &Array2::eye(2)).is_err());
    }

    #[test]
    fn roc_of_all_zero_path() {
        let t = truth(vec![1.0, 0.0, 0.0]);
        let path = SolutionPath {
            alpha: 0.5,
            sigma_hat: 1.0,
            fits: vec![fit(Array1::zeros(3), 1.0)],
        };
        let pts = selection_roc(&path, &t).unwrap();
        let xy: Vec<(f64, f64)> = pts.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(xy, vec![(0.0, 0.0), (0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(roc_auc(&pts), 0.5);
    }

    #[test]
    fn roc_through_perfect_recovery() {
        let t = truth(vec![1.0, 0.0, 0.0]);
        let path = SolutionPath {
            alpha: 0.5,
            sigma_hat: 1.0,
            fits: vec![
                fit(array![0.0, 0.0, 0.0], 3.0),
                fit(array![0.4, 0.0, 0.0], 2.0),
                fit(array![0.8, 0.1, 0.0], 1.0),
            ],
        };
        assert_eq!(roc_auc(&selection_roc(&path, &t).unwrap()), 1.0);
        let empty = SolutionPath { alpha: 0.5, sigma_hat: 1.0, fits: vec![] };
        assert!(selection_roc(&empty, &t).is_err());
    }

    #[test]
    fn c_index_examples() {
        let t = array![1.0, 2.0, 3.0];
        let all = [true, true, true];
        assert_eq!(c_index(array![3.0, 2.0, 1.0].view(), t.view(), &all).unwrap(), 1.0);
        assert_eq!(c_index(array![1.0, 2.0, 3.0].view(), t.view(), &all).unwrap(), 0.0);
        let mixed = [true, false, true];
        assert_eq!(c_index(array![3.0, 1.0, 2.0].view(), t.view(), &mixed).unwrap(), 1.0);
        assert_eq!(c_index(array![1.0, 1.0, 1.0].view(), t.view(), &all).unwrap(), 0.5);
    }

    #[test]
    fn c_index_without_pairs() {
        let t = array![1.0, 2.0];
        assert!(matches!(
            c_index(array![0.0, 1.0].view(), t.view(), &[false, false]),
            Err(AftError::NoComparablePairs)
        ));
        assert!(c_index(array![0.0].view(), t.view(), &[true, true]).is_err());
    }
}
