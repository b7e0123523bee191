use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use aftnet::error::{AftError, Result};
use aftnet::evaluation::{c_index, roc_auc, selection_metrics, selection_roc_points};
use aftnet::io::{
    load_adjacency, load_dataset, read_json, read_numeric_table, sha256_file, write_dataset, write_edge_list,
    write_json, read_result, CvRecord, FitRecord, OutputDir, PathRecord, ResultFile, RunManifest,
};
use aftnet::network::{NetworkPrior, PenaltyConfig};
use aftnet::pipeline::{replicate, ReplicateConfig};
use aftnet::scale::{estimate_sigma, DEFAULT_MAX_ITER, DEFAULT_TOL};
use aftnet::selection::{cv_pl, make_lambda_grid, CvOptions, DEFAULT_FOLDS, DEFAULT_MIN_RATIO, DEFAULT_N_LAMBDA};
use aftnet::solver::{fit_path, null_coefficients, prox_grad_fit, SolverOptions};
use aftnet::survival::SurvivalDataset;
use aftnet::synthetic::{simulate_scenario, Effect, GroundTruth, ScenarioConfig, Topology};

#[derive(Parser, Debug)]
#[command(name = "aftnet", version, about = "Network-penalized Weibull AFT regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a benchmark scenario: train/test CSVs, edge list and truth
    Simulate(SimulateArgs),
    /// Fit at one lambda
    Fit(FitArgs),
    /// Fit a warm-started lambda path
    Path(PathArgs),
    /// Select lambda by cross-validation and refit the path on all data
    Cv(CvArgs),
    /// Score a result against a known truth
    Evaluate(EvaluateArgs),
    /// Run benchmark replications and summarize them
    Replicate(ReplicateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum TopologyArg {
    Disjoint,
    Overlap,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum EffectArg {
    Weak,
    Strong,
}

#[derive(Args, Debug, Serialize)]
struct ScenarioArgs {
    #[arg(long, value_enum, default_value = "disjoint")]
    topology: TopologyArg,
    #[arg(long, value_enum, default_value = "weak")]
    effect: EffectArg,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Positively correlated genes per module
    #[arg(long)]
    v: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    censor_rate: Option<f64>,
}

impl ScenarioArgs {
    fn config(&self) -> ScenarioConfig {
        let topology = match self.topology {
            TopologyArg::Disjoint => Topology::NotOverlapping,
            TopologyArg::Overlap => Topology::Overlapping,
        };
        let effect = match self.effect {
            EffectArg::Weak => Effect::Weak,
            EffectArg::Strong => Effect::Strong,
        };
        let mut cfg = ScenarioConfig::preset(topology, effect, self.sigma, self.seed);
        if let Some(v) = self.v {
            cfg.v = v;
        }
        if let Some(rho) = self.rho {
            cfg.rho = rho;
        }
        if let Some(c) = self.censor_rate {
            cfg.censor_rate = c;
        }
        cfg
    }
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ModelArgs {
    #[arg(long)]
    features: PathBuf,
    /// CSV with `time` and `status` columns
    #[arg(long)]
    outcomes: PathBuf,
    /// Edge list `source,target[,weight]`; no network means a pure lasso penalty
    #[arg(long)]
    network: Option<PathBuf>,
    /// `time` already holds log times
    #[arg(long)]
    log_times: bool,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long)]
    standardize: bool,
    /// Add an unpenalized intercept
    #[arg(long)]
    intercept: bool,
    /// Use this scale instead of the intercept-only estimate
    #[arg(long)]
    sigma_hat: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    lambda: f64,
}

#[derive(Args, Debug, Serialize)]
struct GridArgs {
    #[arg(long, default_value_t = DEFAULT_N_LAMBDA)]
    nlambda: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_RATIO)]
    lambda_min_ratio: f64,
}

#[derive(Args, Debug, Serialize)]
struct PathArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug, Serialize)]
struct CvArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Deal folds without balancing events and censored subjects
    #[arg(long)]
    no_stratify: bool,
}

#[derive(Args, Debug, Serialize)]
struct EvaluateArgs {
    /// Output of `fit`, `path` or `cv`
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    test_features: PathBuf,
    /// Enables the concordance index
    #[arg(long)]
    test_outcomes: Option<PathBuf>,
    #[arg(long)]
    log_times: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ReplicateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    #[arg(long)]
    out: PathBuf,
}

struct Run {
    subcommand: &'static str,
    options: serde_json::Value,
    seeds: Vec<u64>,
    inputs: Vec<PathBuf>,
    started: Instant,
}

impl Run {
    fn new<T: Serialize>(subcommand: &'static str, args: &T, seeds: Vec<u64>) -> Self {
        Self {
            subcommand,
            options: serde_json::to_value(args).unwrap_or(serde_json::Value::Null),
            seeds,
            inputs: Vec::new(),
            started: Instant::now(),
        }
    }

    fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Writes the manifest last, then keeps every output.
    fn finish(self, mut out: OutputDir) -> Result<()> {
        let mut inputs = BTreeMap::new();
        for p in &self.inputs {
            inputs.insert(p.display().to_string(), sha256_file(p)?);
        }
        let outputs = out.file_names();
        let manifest = RunManifest {
            subcommand: self.subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            options: self.options,
            seeds: self.seeds,
            inputs,
            outputs,
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = out.file("manifest.json");
        write_json(&path, &manifest)?;
        out.commit();
        Ok(())
    }
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let run = Run::new("simulate", args, vec![args.scenario.seed]);
    let cfg = args.scenario.config();
    let sc = simulate_scenario(&cfg)?;
    let mut out = OutputDir::create(&args.out)?;
    let (tf, to) = (out.file("train_features.csv"), out.file("train_outcomes.csv"));
    write_dataset(&tf, &to, &sc.train)?;
    let (sf, so) = (out.file("test_features.csv"), out.file("test_outcomes.csv"));
    write_dataset(&sf, &so, &sc.test)?;
    write_edge_list(&out.file("network.csv"), &sc.prior)?;
    write_json(&out.file("truth.json"), &sc.truth)?;
    write_json(&out.file("scenario.json"), &cfg)?;
    run.finish(out)
}

struct Model {
    data: SurvivalDataset,
    prior: NetworkPrior,
    sigma_hat: f64,
    opts: SolverOptions,
}

fn load_model(args: &ModelArgs, run: &mut Run) -> Result<Model> {
    run.input(&args.features);
    run.input(&args.outcomes);
    let data = load_dataset(&args.features, &args.outcomes, args.log_times)?;
    let names = data.feature_names().map(<[String]>::to_vec).unwrap_or_default();
    let prior = match &args.network {
        Some(path) => {
            run.input(path);
            let loaded = load_adjacency(path, &names)?;
            if loaded.self_loops_dropped > 0 {
                eprintln!("warning: dropped {} self-loop edge(s) from {}", loaded.self_loops_dropped, path.display());
            }
            loaded.prior
        }
        None => NetworkPrior::empty(names.len()).with_node_names(names)?,
    };
    let sigma_hat = match args.sigma_hat {
        Some(s) => s,
        None => estimate_sigma(&data, DEFAULT_TOL, DEFAULT_MAX_ITER)?.sigma_hat,
    };
    let data = if args.intercept { data.with_intercept() } else { data };
    let opts = SolverOptions {
        max_iter: args.max_iter,
        tol: args.tol,
        standardize: args.standardize,
        ..SolverOptions::default()
    };
    Ok(Model {
        data,
        prior,
        sigma_hat,
        opts,
    })
}

fn fit(args: &FitArgs) -> Result<()> {
    let mut run = Run::new("fit", args, Vec::new());
    let m = load_model(&args.model, &mut run)?;
    let cfg = PenaltyConfig::new(args.lambda, args.model.alpha)?;
    let start = null_coefficients(&m.data, m.sigma_hat);
    let result = prox_grad_fit(&m.data, &m.prior, &cfg, m.sigma_hat, start.view(), &m.opts)?;
    let mut out = OutputDir::create(&args.model.out)?;
    write_json(&out.file("result.json"), &FitRecord::from_fit(&result))?;
    run.finish(out)
}

fn path(args: &PathArgs) -> Result<()> {
    let mut run = Run::new("path", args, Vec::new());
    let m = load_model(&args.model, &mut run)?;
    let grid = make_lambda_grid(&m.data, args.model.alpha, m.sigma_hat, args.grid.nlambda, args.grid.lambda_min_ratio)?;
    let sol = fit_path(&m.data, &m.prior, args.model.alpha, &grid.values, m.sigma_hat, &m.opts)?;
    let mut out = OutputDir::create(&args.model.out)?;
    write_json(&out.file("path.json"), &PathRecord::from_path(&sol))?;
    run.finish(out)
}

fn cv(args: &CvArgs) -> Result<()> {
    let mut run = Run::new("cv", args, vec![args.seed]);
    let m = load_model(&args.model, &mut run)?;
    let alpha = args.model.alpha;
    let grid = make_lambda_grid(&m.data, alpha, m.sigma_hat, args.grid.nlambda, args.grid.lambda_min_ratio)?;
    let cv_opts = CvOptions {
        folds: args.folds,
        seed: args.seed,
        stratified: !args.no_stratify,
    };
    let report = cv_pl(&m.data, &m.prior, alpha, &grid, &cv_opts, m.sigma_hat, &m.opts)?;
    let sol = fit_path(&m.data, &m.prior, alpha, &grid.values, m.sigma_hat, &m.opts)?;
    let record = CvRecord {
        selected: FitRecord::from_fit(&sol.fits[report.lambda_opt_index]),
        path: PathRecord::from_path(&sol),
        report,
        grid,
    };
    let mut out = OutputDir::create(&args.model.out)?;
    write_json(&out.file("cv.json"), &record)?;
    run.finish(out)
}

#[derive(Serialize)]
struct EvaluationReport {
    lambda: f64,
    #[serde(flatten)]
    metrics: aftnet::evaluation::MetricsReport,
    c_index: Option<f64>,
    roc_auc: Option<f64>,
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let mut run = Run::new("evaluate", args, Vec::new());
    run.input(&args.result);
    run.input(&args.truth);
    run.input(&args.test_features);
    let result = read_result(&args.result)?;
    let truth: GroundTruth = read_json(&args.truth)?;
    let (_, x_test) = read_numeric_table(&args.test_features)?;
    let (fit, path) = match &result {
        ResultFile::Cv(c) => (&c.selected, Some(&c.path)),
        ResultFile::Path(p) => (
            p.fits
                .last()
                .ok_or_else(|| AftError::InvalidData("path result has no fits".into()))?,
            Some(p),
        ),
        ResultFile::Fit(f) => (f, None),
    };
    let beta = fit.dense_beta()?;
    let metrics = selection_metrics(beta.view(), &truth, &x_test)?;
    let c = match &args.test_outcomes {
        Some(o) => {
            run.input(o);
            let test = load_dataset(&args.test_features, o, args.log_times)?;
            let risks = -test.covariates().dot(&beta);
            Some(c_index(risks.view(), test.log_times(), test.events())?)
        }
        None => None,
    };
    let roc = match path {
        Some(p) => {
            let betas = p.fits.iter().map(|f| Ok((f.lambda, f.dense_beta()?))).collect::<Result<Vec<_>>>()?;
            Some(selection_roc_points(betas.iter().map(|(l, b)| (*l, b.view())), &truth)?)
        }
        None => None,
    };
    let report = EvaluationReport {
        lambda: fit.lambda,
        metrics,
        c_index: c,
        roc_auc: roc.as_deref().map(roc_auc),
    };
    let mut out = OutputDir::create(&args.out)?;
    write_json(&out.file("metrics.json"), &report)?;
    if let Some(points) = roc {
        let path = out.file("roc.csv");
        let mut wtr = csv::Writer::from_path(&path).map_err(|source| AftError::Csv {
            path: path.clone(),
            source,
        })?;
        let csv_err = |source| AftError::Csv {
            path: path.clone(),
            source,
        };
        wtr.write_record(["lambda", "fpr", "tpr"]).map_err(csv_err)?;
        for pt in points {
            let lambda = pt.lambda.map(|l| l.to_string()).unwrap_or_default();
            wtr.write_record([lambda, pt.fpr.to_string(), pt.tpr.to_string()])
                .map_err(csv_err)?;
        }
        wtr.flush().map_err(|source| AftError::Io {
            path: path.clone(),
            source,
        })?;
    }
    run.finish(out)
}

fn replicate_cmd(args: &ReplicateArgs) -> Result<()> {
    if args.reps == 0 {
        return Err(AftError::InvalidParameter("reps must be >= 1".into()));
    }
    let seeds = (0..args.reps as u64).map(|k| args.scenario.seed.wrapping_add(k)).collect();
    let run = Run::new("replicate", args, seeds);
    let mut cfg = ReplicateConfig::new(args.scenario.config(), args.reps, args.alpha);
    cfg.n_lambda = args.grid.nlambda;
    cfg.min_ratio = args.grid.lambda_min_ratio;
    cfg.folds = args.folds;
    let (outcomes, summary) = replicate(&cfg)?;

    let mut out = OutputDir::create(&args.out)?;
    let path = out.file("replications.csv");
    let csv_err = |source| AftError::Csv {
        path: path.clone(),
        source,
    };
    let mut wtr = csv::Writer::from_path(&path).map_err(csv_err)?;
    wtr.write_record([
        "rep", "seed", "sigma_hat", "lambda_opt", "emse", "pmse", "fnr", "fpr", "nsr", "c_index", "roc_auc",
    ])
    .map_err(csv_err)?;
    for o in &outcomes {
        let m = &o.metrics;
        wtr.write_record([
            o.rep.to_string(),
            o.seed.to_string(),
            o.sigma_hat.to_string(),
            o.lambda_opt.to_string(),
            m.emse.to_string(),
            m.pmse.to_string(),
            m.fnr.to_string(),
            m.fpr.to_string(),
            m.nsr.to_string(),
            o.c_index.to_string(),
            o.roc_auc.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let s = &summary;
    wtr.write_record([
        "mean".to_string(),
        String::new(),
        String::new(),
        String::new(),
        s.emse.to_string(),
        s.pmse.to_string(),
        s.fnr.to_string(),
        s.fpr.to_string(),
        s.nsr.to_string(),
        s.c_index.to_string(),
        s.roc_auc.to_string(),
    ])
    .map_err(csv_err)?;
    wtr.flush().map_err(|source| AftError::Io {
        path: path.clone(),
        source,
    })?;
    write_json(&out.file("summary.json"), &summary)?;
    run.finish(out)
}

fn configure_threads() {
    let Ok(value) = std::env::var("AFTNET_THREADS") else {
        return;
    };
    match value.trim().parse::<usize>() {
        // 0 keeps rayon's default of one thread per core
        Ok(0) => {}
        Ok(n) => {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Err(_) => eprintln!("warning: ignoring AFTNET_THREADS={value:?}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Path(a) => path(a),
        Command::Cv(a) => cv(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Replicate(a) => replicate_cmd(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
