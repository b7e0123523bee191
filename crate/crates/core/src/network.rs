//! Graph Laplacian prior and the combined lasso + Laplacian penalty
//! `lambda * (alpha * |beta|_1 + (1 - alpha) * beta^T L beta)`.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{AftError, Result};
use crate::spectral::power_iteration;

/// Sparse adjacency as `(row, col) -> weight` with deterministic (sorted) iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Adjacency {
    dim: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl Adjacency {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
        }
    }

    /// Raw entries; no symmetrization is done, so `build_laplacian` will
    /// reject a one-sided input.
    pub fn from_triplets(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut adj = Self::new(dim);
        for (i, j, w) in triplets {
            adj.set(i, j, w)?;
        }
        Ok(adj)
    }

    /// Undirected edges; each edge sets both `(i, j)` and `(j, i)`.
    pub fn from_edges(dim: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut adj = Self::new(dim);
        for (i, j, w) in edges {
            adj.set(i, j, w)?;
            adj.set(j, i, w)?;
        }
        Ok(adj)
    }

    pub fn from_dense(a: &Array2<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(AftError::DimensionMismatch {
                what: "adjacency must be square",
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        let triplets = a
            .indexed_iter()
            .filter(|(_, &w)| w != 0.0)
            .map(|((i, j), &w)| (i, j, w));
        Self::from_triplets(a.nrows(), triplets)
    }

    pub fn set(&mut self, i: usize, j: usize, w: f64) -> Result<()> {
        if i >= self.dim || j >= self.dim {
            return Err(AftError::DimensionMismatch {
                what: "adjacency index out of range",
                expected: self.dim,
                found: i.max(j),
            });
        }
        if w == 0.0 {
            self.entries.remove(&(i, j));
        } else {
            self.entries.insert((i, j), w);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(&(i, j)).copied().unwrap_or(0.0)
    }

    /// Number of stored nonzero entries (twice the edge count when symmetric).
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &w)| (i, j, w))
    }
}

/// Adjacency plus its Laplacian `L = D - A`, stored row-wise with sorted columns.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkPrior {
    adjacency: Adjacency,
    // row -> sorted (col, value), diagonal included when nonzero
    laplacian_rows: Vec<Vec<(usize, f64)>>,
    node_names: Option<Vec<String>>,
}

impl NetworkPrior {
    /// A prior with no edges (zero Laplacian); the penalty reduces to the lasso.
    pub fn empty(dim: usize) -> Self {
        Self {
            adjacency: Adjacency::new(dim),
            laplacian_rows: vec![Vec::new(); dim],
            node_names: None,
        }
    }

    pub fn with_node_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim() {
            return Err(AftError::DimensionMismatch {
                what: "node names vs network dimension",
                expected: self.dim(),
                found: names.len(),
            });
        }
        self.node_names = Some(names);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.laplacian_rows.len()
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn node_names(&self) -> Option<&[String]> {
        self.node_names.as_deref()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&(i, j, _)| i < j).count()
    }

    pub fn degree(&self, node: usize) -> f64 {
        self.laplacian_rows[node]
            .iter()
            .find(|&&(c, _)| c == node)
            .map_or(0.0, |&(_, v)| v)
    }

    /// `L v`.
    pub fn laplacian_mul(&self, v: ArrayView1<f64>) -> Array1<f64> {
        Array1::from_iter(
            self.laplacian_rows
                .iter()
                .map(|row| row.iter().map(|&(c, l)| l * v[c]).sum::<f64>()),
        )
    }

    /// `v^T L v`.
    pub fn quadratic_form(&self, v: ArrayView1<f64>) -> f64 {
        self.laplacian_rows
            .iter()
            .enumerate()
            .map(|(r, row)| v[r] * row.iter().map(|&(c, l)| l * v[c]).sum::<f64>())
            .sum()
    }

    pub fn laplacian_dense(&self) -> Array2<f64> {
        let p = self.dim();
        let mut l = Array2::zeros((p, p));
        for (r, row) in self.laplacian_rows.iter().enumerate() {
            for &(c, v) in row {
                l[[r, c]] = v;
            }
        }
        l
    }

    /// Largest eigenvalue of `L` by power iteration. Falls back to `2 * max degree`
    /// (an upper bound for `D - A` with nonnegative weights) if iteration stalls.
    pub fn laplacian_max_eigenvalue(&self) -> f64 {
        if self.adjacency.nnz() == 0 {
            return 0.0;
        }
        let est = power_iteration(self.dim(), |v| self.laplacian_mul(v.view()), 1e-12, 20_000);
        if est.converged {
            est.value
        } else {
            2.0 * (0..self.dim()).map(|i| self.degree(i)).fold(0.0, f64::max)
        }
    }
}

/// Validates the adjacency and forms `L = D - A` with `D = diag(row sums)`.
pub fn build_laplacian(adjacency: &Adjacency) -> Result<NetworkPrior> {
    for (i, j, w) in adjacency.iter() {
        if i == j {
            return Err(AftError::SelfLoop(i));
        }
        if !(w >= 0.0) || !w.is_finite() {
            return Err(AftError::NegativeWeight { row: i, col: j, weight: w });
        }
        if adjacency.get(j, i) != w {
            return Err(AftError::AsymmetricAdjacency { row: i, col: j });
        }
    }
    let p = adjacency.dim();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p];
    for (i, j, w) in adjacency.iter() {
        rows[i].push((j, -w));
    }
    for (i, row) in rows.iter_mut().enumerate() {
        if row.is_empty() {
            continue;
        }
        let degree: f64 = row.iter().map(|&(_, v)| -v).sum();
        row.push((i, degree));
        row.sort_by_key(|&(c, _)| c);
    }
    Ok(NetworkPrior {
        adjacency: adjacency.clone(),
        laplacian_rows: rows,
        node_names: None,
    })
}

/// Penalty weight `lambda >= 0` and lasso/Laplacian mix `alpha` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    lambda: f64,
    alpha: f64,
}

impl PenaltyConfig {
    pub fn new(lambda: f64, alpha: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(AftError::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(AftError::InvalidParameter(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        Ok(Self { lambda, alpha })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Weight of the l1 term, `lambda * alpha`.
    pub fn l1_weight(&self) -> f64 {
        self.lambda * self.alpha
    }

    /// Weight of the quadratic term, `lambda * (1 - alpha)`.
    pub fn quadratic_weight(&self) -> f64 {
        self.lambda * (1.0 - self.alpha)
    }
}

fn check_dim(beta: ArrayView1<f64>, prior: &NetworkPrior) -> Result<()> {
    if beta.len() != prior.dim() {
        return Err(AftError::DimensionMismatch {
            what: "beta length vs network dimension",
            expected: prior.dim(),
            found: beta.len(),
        });
    }
    Ok(())
}

pub fn penalty_value(beta: ArrayView1<f64>, cfg: &PenaltyConfig, prior: &NetworkPrior) -> Result<f64> {
    check_dim(beta, prior)?;
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let quad = if cfg.quadratic_weight() == 0.0 {
        0.0
    } else {
        prior.quadratic_form(beta)
    };
    Ok(cfg.l1_weight() * l1 + cfg.quadratic_weight() * quad)
}

/// Gradient of the smooth part only, `2 lambda (1 - alpha) L beta`.
pub fn smooth_penalty_gradient(beta: ArrayView1<f64>, cfg: &PenaltyConfig, prior: &NetworkPrior) -> Result<Array1<f64>> {
    check_dim(beta, prior)?;
    let w = cfg.quadratic_weight();
    if w == 0.0 {
        return Ok(Array1::zeros(beta.len()));
    }
    Ok(prior.laplacian_mul(beta) * (2.0 * w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn edge_prior() -> NetworkPrior {
        build_laplacian(&Adjacency::from_dense(&array![[0.0, 1.0], [1.0, 0.0]]).unwrap()).unwrap()
    }

    #[test]
    fn two_node_edge() {
        assert_eq!(edge_prior().laplacian_dense(), array![[1.0, -1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn empty_graph() {
        let prior = build_laplacian(&Adjacency::new(3)).unwrap();
        assert_eq!(prior.laplacian_dense(), Array2::<f64>::zeros((3, 3)));
        assert_eq!(prior.laplacian_max_eigenvalue(), 0.0);
    }

    #[test]
    fn star_graph() {
        let adj = Adjacency::from_edges(3, [(0, 1, 1.0), (0, 2, 1.0)]).unwrap();
        let prior = build_laplacian(&adj).unwrap();
        assert_eq!(
            prior.laplacian_dense(),
            array![[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]]
        );
        assert_eq!(prior.edge_count(), 2);
        assert!((prior.laplacian_max_eigenvalue() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_asymmetric_negative_and_self_loop() {
        let asym = Adjacency::from_triplets(3, [(0, 2, 1.0)]).unwrap();
        assert!(matches!(
            build_laplacian(&asym),
            Err(AftError::AsymmetricAdjacency { row: 0, col: 2 })
        ));
        let neg = Adjacency::from_edges(2, [(0, 1, -1.0)]).unwrap();
        assert!(matches!(build_laplacian(&neg), Err(AftError::NegativeWeight { .. })));
        let lp = Adjacency::from_triplets(2, [(1, 1, 1.0)]).unwrap();
        assert!(matches!(build_laplacian(&lp), Err(AftError::SelfLoop(1))));
    }

    #[test]
    fn penalty_examples() {
        let prior = edge_prior();
        let zero = array![0.0, 0.0];
        let cfg = PenaltyConfig::new(0.7, 0.3).unwrap();
        assert_eq!(penalty_value(zero.view(), &cfg, &prior).unwrap(), 0.0);

        let lasso = PenaltyConfig::new(0.5, 1.0).unwrap();
        assert_eq!(penalty_value(array![1.0, -1.0].view(), &lasso, &prior).unwrap(), 1.0);

        let quad = PenaltyConfig::new(1.0, 0.0).unwrap();
        assert_eq!(penalty_value(array![1.0, 0.0].view(), &quad, &prior).unwrap(), 1.0);
    }

    #[test]
    fn smooth_gradient_examples() {
        let prior = edge_prior();
        let quad = PenaltyConfig::new(1.0, 0.0).unwrap();
        assert_eq!(
            smooth_penalty_gradient(array![1.0, 0.0].view(), &quad, &prior).unwrap(),
            array![2.0, -2.0]
        );
        assert_eq!(
            smooth_penalty_gradient(array![0.0, 0.0].view(), &quad, &prior).unwrap(),
            array![0.0, 0.0]
        );
        let lasso = PenaltyConfig::new(1.0, 1.0).unwrap();
        assert_eq!(
            smooth_penalty_gradient(array![3.0, -1.0].view(), &lasso, &prior).unwrap(),
            array![0.0, 0.0]
        );
    }

    #[test]
    fn dimension_mismatch() {
        let cfg = PenaltyConfig::new(1.0, 0.5).unwrap();
        assert!(penalty_value(array![1.0].view(), &cfg, &edge_prior()).is_err());
        assert!(smooth_penalty_gradient(array![1.0, 2.0, 3.0].view(), &cfg, &edge_prior()).is_err());
    }

    #[test]
    fn penalty_config_bounds() {
        assert!(PenaltyConfig::new(-0.1, 0.5).is_err());
        assert!(PenaltyConfig::new(0.1, 1.5).is_err());
        assert!(PenaltyConfig::new(0.0, 0.0).is_ok());
    }
}
