//! Synthetic regulatory-network benchmark: transcription-factor (TF) modules,
//! correlated expression designs, sparse true coefficients, Weibull survival
//! times and independent exponential censoring.
//!
//! Variable ordering is one block per module, `[TF_m, genes of m]`, in module
//! order. In the overlapping topology, genes shared by two TFs sit in the block
//! of the earlier module.

use ndarray::{s, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{AftError, Result};
use crate::network::{build_laplacian, Adjacency, NetworkPrior};
use crate::rng::{stream, StreamRole};
use crate::survival::SurvivalDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    NotOverlapping,
    Overlapping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Effect {
    /// `p / n_train = 2`: 20 modules, 110 training and 55 test subjects.
    Weak,
    /// `p / n_train = 4`: 100 modules, 275 training and 138 test subjects.
    Strong,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub topology: Topology,
    /// Number of regulatory modules.
    pub r: usize,
    pub genes_per_module: usize,
    /// Positively correlated genes per module.
    pub v: usize,
    pub rho: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub sigma_true: f64,
    pub p_active: usize,
    pub censor_rate: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn preset(topology: Topology, effect: Effect, sigma_true: f64, seed: u64) -> Self {
        let (r, n_train, n_test) = match effect {
            Effect::Weak => (20, 110, 55),
            Effect::Strong => (100, 275, 138),
        };
        Self {
            topology,
            r,
            genes_per_module: 10,
            v: 5,
            rho: 0.7,
            n_train,
            n_test,
            sigma_true,
            p_active: 88,
            censor_rate: 0.30,
            seed,
        }
    }

    /// Number of variables; both topologies use `r * (genes_per_module + 1)`.
    pub fn p(&self) -> usize {
        self.r * (self.genes_per_module + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AftError::InvalidScenario(m));
        if self.r == 0 {
            return bad("at least one module is required".into());
        }
        if self.topology == Topology::Overlapping {
            if self.r < 4 {
                return bad(format!("overlapping topology needs r >= 4, got {}", self.r));
            }
            if self.genes_per_module != 10 {
                return bad("overlapping topology is defined for 10 genes per module".into());
            }
        }
        if self.v > self.genes_per_module {
            return bad(format!(
                "v = {} exceeds the {} genes in a module",
                self.v, self.genes_per_module
            ));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [-1, 1], got {}", self.rho));
        }
        if !(self.sigma_true > 0.0) {
            return bad(format!("sigma_true must be positive, got {}", self.sigma_true));
        }
        if !(0.0..1.0).contains(&self.censor_rate) {
            return bad(format!("censor_rate must lie in [0, 1), got {}", self.censor_rate));
        }
        if self.p_active > self.p() {
            return bad(format!("p_active = {} exceeds p = {}", self.p_active, self.p()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeRole {
    Tf { module: usize },
    /// Regulated gene; `regulators` are the node indices of its TFs (one or two).
    Gene { regulators: Vec<usize>, modules: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleLayout {
    pub roles: Vec<NodeRole>,
    /// Genes whose correlation signs are drawn together, with the count of positives.
    pub sign_groups: Vec<(Vec<usize>, usize)>,
}

impl ModuleLayout {
    pub fn p(&self) -> usize {
        self.roles.len()
    }

    pub fn node_names(&self) -> Vec<String> {
        self.roles
            .iter()
            .enumerate()
            .map(|(j, role)| match role {
                NodeRole::Tf { module } => format!("TF{}", module + 1),
                NodeRole::Gene { .. } => format!("G{}", j + 1),
            })
            .collect()
    }

    /// Modules each node belongs to.
    pub fn module_map(&self) -> Vec<Vec<usize>> {
        self.roles
            .iter()
            .map(|role| match role {
                NodeRole::Tf { module } => vec![*module],
                NodeRole::Gene { modules, .. } => modules.clone(),
            })
            .collect()
    }

    fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut edges = Vec::new();
        for (j, role) in self.roles.iter().enumerate() {
            if let NodeRole::Gene { regulators, .. } = role {
                edges.extend(regulators.iter().map(|&t| (t, j, 1.0)));
            }
        }
        edges
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub beta_star: Vec<f64>,
    pub active_set: Vec<usize>,
    pub sigma_true: f64,
    pub module_map: Vec<Vec<usize>>,
}

impl GroundTruth {
    pub fn p(&self) -> usize {
        self.beta_star.len()
    }

    pub fn p_active(&self) -> usize {
        self.active_set.len()
    }

    pub fn beta(&self) -> Array1<f64> {
        Array1::from(self.beta_star.clone())
    }
}

struct LayoutBuilder {
    roles: Vec<NodeRole>,
    sign_groups: Vec<(Vec<usize>, usize)>,
}

impl LayoutBuilder {
    fn tf(&mut self, module: usize) -> usize {
        self.roles.push(NodeRole::Tf { module });
        self.roles.len() - 1
    }

    fn genes(&mut self, count: usize, regulators: &[usize], modules: &[usize]) -> Vec<usize> {
        (0..count)
            .map(|_| {
                self.roles.push(NodeRole::Gene {
                    regulators: regulators.to_vec(),
                    modules: modules.to_vec(),
                });
                self.roles.len() - 1
            })
            .collect()
    }

    fn star(&mut self, module: usize, genes: usize, v: usize) {
        let tf = self.tf(module);
        let members = self.genes(genes, &[tf], &[module]);
        self.sign_groups.push((members, v));
    }

    /// Two TFs with `shared` co-regulated genes and `own` exclusive genes each.
    /// The TF of the second module is placed after the first block, so its node
    /// index is known only after the first block is laid out.
    fn overlapping_pair(&mut self, first: usize, shared: usize, own: usize, v: usize, per_module: usize) {
        let tf1 = self.roles.len();
        let tf2 = tf1 + 1 + shared + own;
        self.tf(first);
        let common = self.genes(shared, &[tf1, tf2], &[first, first + 1]);
        let own1 = self.genes(own, &[tf1], &[first]);
        let placed = self.tf(first + 1);
        debug_assert_eq!(placed, tf2);
        let own2 = self.genes(own, &[tf2], &[first + 1]);
        let members: Vec<usize> = common.into_iter().chain(own1).chain(own2).collect();
        // keep the activated fraction v / genes_per_module across the pair's genes
        let positives = ((members.len() * v) as f64 / per_module as f64).round() as usize;
        self.sign_groups.push((members, positives));
    }
}

/// Module layout and its binary TF-gene network.
pub fn gen_network(cfg: &ScenarioConfig) -> Result<(NetworkPrior, ModuleLayout)> {
    cfg.validate()?;
    let mut b = LayoutBuilder {
        roles: Vec::with_capacity(cfg.p()),
        sign_groups: Vec::new(),
    };
    let first_star = match cfg.topology {
        Topology::NotOverlapping => 0,
        Topology::Overlapping => {
            b.overlapping_pair(0, 10, 5, cfg.v, cfg.genes_per_module);
            b.overlapping_pair(2, 6, 7, cfg.v, cfg.genes_per_module);
            4
        }
    };
    for m in first_star..cfg.r {
        b.star(m, cfg.genes_per_module, cfg.v);
    }
    let layout = ModuleLayout {
        roles: b.roles,
        sign_groups: b.sign_groups,
    };
    let adjacency = Adjacency::from_edges(layout.p(), layout.edges())?;
    let prior = build_laplacian(&adjacency)?.with_node_names(layout.node_names())?;
    Ok((prior, layout))
}

/// Correlation signs for every gene (`+1` / `-1`), 0 for TFs.
fn draw_signs(layout: &ModuleLayout, seed: u64) -> Result<Vec<f64>> {
    let mut rng = stream(seed, StreamRole::Signs);
    let mut signs = vec![0.0; layout.p()];
    for (members, positives) in &layout.sign_groups {
        if *positives > members.len() {
            return Err(AftError::InvalidScenario(format!(
                "{positives} positive genes requested in a group of {}",
                members.len()
            )));
        }
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for (k, &g) in shuffled.iter().enumerate() {
            signs[g] = if k < *positives { 1.0 } else { -1.0 };
        }
    }
    Ok(signs)
}

/// `n_rows x p` design. TFs are i.i.d. N(0, 1); a gene regulated by TF `t` is
/// `s * rho * X_t + sqrt(1 - rho^2) * Z`, and a gene shared by two TFs conditions on
/// their unit-variance average `(X_t1 + X_t2) / sqrt(2)` instead. Every column is
/// marginally N(0, 1).
pub fn gen_design(layout: &ModuleLayout, cfg: &ScenarioConfig, n_rows: usize) -> Result<Array2<f64>> {
    cfg.validate()?;
    let signs = draw_signs(layout, cfg.seed)?;
    let mut rng = stream(cfg.seed, StreamRole::Design);
    let p = layout.p();
    let noise_sd = (1.0 - cfg.rho * cfg.rho).max(0.0).sqrt();
    let mut x = Array2::zeros((n_rows, p));
    for mut row in x.axis_iter_mut(Axis(0)) {
        for (j, role) in layout.roles.iter().enumerate() {
            if let NodeRole::Tf { .. } = role {
                row[j] = rng.sample(StandardNormal);
            }
        }
        for (j, role) in layout.roles.iter().enumerate() {
            if let NodeRole::Gene { regulators, .. } = role {
                let sum: f64 = regulators.iter().map(|&t| row[t]).sum();
                let driver = sum / (regulators.len() as f64).sqrt();
                let z: f64 = rng.sample(StandardNormal);
                row[j] = signs[j] * cfg.rho * driver + noise_sd * z;
            }
        }
    }
    Ok(x)
}

/// First `ceil(p_active / 2)` coefficients from U(0.1, 0.5), the rest of the active
/// block from U(-0.5, -0.1), all later coefficients zero.
pub fn gen_true_beta(cfg: &ScenarioConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let p = cfg.p();
    let (_, layout) = gen_network(cfg)?;
    let mut rng = stream(cfg.seed, StreamRole::Truth);
    let positives = cfg.p_active.div_ceil(2);
    let mut beta = vec![0.0; p];
    for (j, b) in beta.iter_mut().enumerate().take(cfg.p_active) {
        let magnitude: f64 = rng.random_range(0.1..0.5);
        *b = if j < positives { magnitude } else { -magnitude };
    }
    Ok(GroundTruth {
        beta_star: beta,
        active_set: (0..cfg.p_active).collect(),
        sigma_true: cfg.sigma_true,
        module_map: layout.module_map(),
    })
}

/// Weibull event times with shape `1 / sigma` and scale `exp(x_i^T beta*)`, censored
/// by i.i.d. exponential times whose rate is calibrated on this sample so that
/// exactly `round(censor_rate * n)` subjects are censored.
///
/// Returns `(y, delta)` with `y_i = min(log T_i, log C_i)`.
pub fn gen_survival(x: &Array2<f64>, truth: &GroundTruth, cfg: &ScenarioConfig) -> Result<(Array1<f64>, Vec<bool>)> {
    if !(0.0..1.0).contains(&cfg.censor_rate) {
        return Err(AftError::InvalidScenario(format!(
            "censor_rate must lie in [0, 1), got {}",
            cfg.censor_rate
        )));
    }
    if x.ncols() != truth.p() {
        return Err(AftError::DimensionMismatch {
            what: "design columns vs true coefficients",
            expected: truth.p(),
            found: x.ncols(),
        });
    }
    let n = x.nrows();
    let eta = x.dot(&truth.beta());
    let mut time_rng = stream(cfg.seed, StreamRole::Times);
    let mut cens_rng = stream(cfg.seed, StreamRole::Censoring);

    // log T = eta + sigma * log(-log U): T = exp(eta) * (-log U)^sigma
    let log_t: Vec<f64> = eta
        .iter()
        .map(|&e| {
            let u: f64 = time_rng.sample(Open01);
            e + cfg.sigma_true * (-u.ln()).ln()
        })
        .collect();
    // C = E / rate with E ~ Exp(1); subject i is censored iff log E_i - log T_i < log rate
    let log_e: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = cens_rng.sample(Open01);
            (-u.ln()).ln()
        })
        .collect();

    let target = (cfg.censor_rate * n as f64).round() as usize;
    if target == 0 {
        return Ok((Array1::from(log_t), vec![true; n]));
    }
    let mut ratios: Vec<f64> = log_e.iter().zip(&log_t).map(|(e, t)| e - t).collect();
    ratios.sort_by(f64::total_cmp);
    let log_rate = if target >= n {
        ratios[n - 1] + 1.0
    } else {
        0.5 * (ratios[target - 1] + ratios[target])
    };

    let mut y = Array1::zeros(n);
    let mut events = Vec::with_capacity(n);
    for i in 0..n {
        let log_c = log_e[i] - log_rate;
        let event = log_t[i] <= log_c;
        y[i] = if event { log_t[i] } else { log_c };
        events.push(event);
    }
    Ok((y, events))
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub train: SurvivalDataset,
    pub test: SurvivalDataset,
    pub prior: NetworkPrior,
    pub truth: GroundTruth,
    pub layout: ModuleLayout,
}

/// Draws `n_train + n_test` subjects from one design and truth and splits them by index.
pub fn simulate_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let (prior, layout) = gen_network(cfg)?;
    let n = cfg.n_train + cfg.n_test;
    let x = gen_design(&layout, cfg, n)?;
    let truth = gen_true_beta(cfg)?;
    let (y, events) = gen_survival(&x, &truth, cfg)?;
    let names = layout.node_names();
    let split = |range: std::ops::Range<usize>| -> Result<SurvivalDataset> {
        SurvivalDataset::new(
            x.slice(s![range.clone(), ..]).to_owned(),
            y.slice(s![range.clone()]).to_owned(),
            events[range].to_vec(),
        )?
        .with_feature_names(names.clone())
    };
    Ok(Scenario {
        train: split(0..cfg.n_train)?,
        test: split(cfg.n_train..n)?,
        prior,
        truth,
        layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn not_overlapping_dimensions() {
        let cfg = ScenarioConfig::preset(Topology::NotOverlapping, Effect::Weak, 1.0, 1);
        let (prior, layout) = gen_network(&cfg).unwrap();
        assert_eq!(prior.dim(), 220);
        assert_eq!(layout.p(), 220);
        assert_eq!(prior.edge_count(), 200);
        let strong = ScenarioConfig::preset(Topology::NotOverlapping, Effect::Strong, 1.0, 1);
        assert_eq!(gen_network(&strong).unwrap().0.dim(), 1100);
    }

    #[test]
    fn overlapping_structure() {
        let cfg = ScenarioConfig::preset(Topology::Overlapping, Effect::Weak, 1.0, 1);
        let (prior, layout) = gen_network(&cfg).unwrap();
        assert_eq!(prior.dim(), 220);
        // TF1 at 0 regulates 10 shared + 5 own; TF2 at 16 regulates 10 shared + 5 own
        assert_eq!(prior.degree(0), 15.0);
        assert_eq!(prior.degree(16), 15.0);
        for g in 1..=10 {
            assert_eq!(prior.degree(g), 2.0);
        }
        // TF3 at 22, TF4 at 36: 6 shared + 7 own each
        assert_eq!(prior.degree(22), 13.0);
        assert_eq!(prior.degree(36), 13.0);
        for g in 23..=28 {
            assert_eq!(prior.degree(g), 2.0);
        }
        assert_eq!(layout.roles[44], NodeRole::Tf { module: 4 });
        assert_eq!(prior.edge_count(), 10 * 2 + 10 + 6 * 2 + 14 + 16 * 10);
    }

    #[test]
    fn overlapping_needs_four_modules() {
        let mut cfg = ScenarioConfig::preset(Topology::Overlapping, Effect::Weak, 1.0, 1);
        cfg.r = 3;
        assert!(gen_network(&cfg).is_err());
    }

    #[test]
    fn v_larger_than_module_rejected() {
        let mut cfg = ScenarioConfig::preset(Topology::NotOverlapping, Effect::Weak, 1.0, 1);
        cfg.v = 11;
        assert!(gen_network(&cfg).is_err());
    }

    #[test]
    fn sign_groups_have_v_positives() {
        let cfg = ScenarioConfig::preset(Topology::NotOverlapping, Effect::Weak, 1.0, 9);
        let (_, layout) = gen_network(&cfg).unwrap();
        let signs = draw_signs(&layout, cfg.seed).unwrap();
        for (members, _) in &layout.sign_groups {
            let pos = members.iter().filter(|&&g| signs[g] > 0.0).count();
            assert_eq!(pos, 5);
        }
    }

    #[test]
    fn true_beta_layout() {
        let cfg = ScenarioConfig::preset(Topology::NotOverlapping, Effect::Weak, 1.0, 5);
        let truth = gen_true_beta(&cfg).unwrap();
        assert_eq!(truth.beta_star.iter().filter(|b| **b != 0.0).count(), 88);
        for (j, &b) in truth.beta_star.iter().enumerate() {
            match j {
                0..=43 => assert!((0.1..=0.5).contains(&b)),
                44..=87 => assert!((-0.5..=-0.1).contains(&b)),
                _ => assert_eq!(b, 0.0),
            }
        }
        assert_eq!(truth.active_set, (0..88).collect::<Vec<_>>());
    }

    #[test]
    fn p_smaller_than_active_rejected() {
        let mut cfg = ScenarioConfig::preset(Topology::NotOverlapping, Effect::Weak, 1.0, 5);
        cfg.r = 7;
        assert!(gen_true_beta(&cfg).is_err());
    }

    #[test]
    fn no_censoring_keeps_event_times() {
        let mut cfg = ScenarioConfig::preset(Topology::NotOverlapping, Effect::Weak, 1.0, 5);
        cfg.censor_rate = 0.0;
        let truth = gen_true_beta(&cfg).unwrap();
        let x = Array2::zeros((50, cfg.p()));
        let (_, events) = gen_survival(&x, &truth, &cfg).unwrap();
        assert!(events.iter().all(|&d| d));
        cfg.censor_rate = 1.0;
        assert!(gen_survival(&x, &truth, &cfg).is_err());
    }

    #[test]
    fn presets_match_table_dimensions() {
        let weak = simulate_scenario(&ScenarioConfig::preset(Topology::NotOverlapping, Effect::Weak, 1.0, 3)).unwrap();
        assert_eq!((weak.train.n_samples(), weak.test.n_samples(), weak.train.n_features()), (110, 55, 220));
        let strong =
            simulate_scenario(&ScenarioConfig::preset(Topology::Overlapping, Effect::Strong, 0.5, 3)).unwrap();
        assert_eq!(
            (strong.train.n_samples(), strong.test.n_samples(), strong.train.n_features()),
            (275, 138, 1100)
        );
    }

    #[test]
    fn same_seed_same_scenario() {
        let cfg = ScenarioConfig::preset(Topology::Overlapping, Effect::Weak, 1.5, 42);
        let a = simulate_scenario(&cfg).unwrap();
        let b = simulate_scenario(&cfg).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.truth, b.truth);
    }
}
