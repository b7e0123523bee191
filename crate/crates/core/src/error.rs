use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AftError>;

#[derive(Debug, Error)]
pub enum AftError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("diverged evaluation: standardized residual {residual} exceeds the overflow limit")]
    DivergedEvaluation { residual: f64 },

    #[error("adjacency is not symmetric at ({row}, {col})")]
    AsymmetricAdjacency { row: usize, col: usize },

    #[error("adjacency has a negative weight {weight} at ({row}, {col})")]
    NegativeWeight { row: usize, col: usize, weight: f64 },

    #[error("adjacency has a self-loop at node {0}")]
    SelfLoop(usize),

    #[error("degenerate scale: log sigma fell below {floor}")]
    DegenerateScale { floor: f64 },

    #[error("scale estimation did not converge after {iterations} iterations (mu = {mu}, sigma = {sigma})")]
    ScaleNotConverged {
        iterations: usize,
        mu: f64,
        sigma: f64,
    },

    #[error("step collapse: backtracking exceeded {doublings} inflations of M (M = {m})")]
    StepCollapse { doublings: usize, m: f64 },

    #[error("non-finite objective at the initial point")]
    NonFiniteStart,

    #[error("null problem: gradient at the origin is zero, lambda_max = 0")]
    NullProblem,

    #[error("infeasible fold {fold}: its training part has no events; use fewer folds or stratified assignment")]
    InfeasibleFold { fold: usize },

    #[error("no comparable pairs for the concordance index")]
    NoComparablePairs,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("at lambda index {index}: {source}")]
    AtLambda {
        index: usize,
        #[source]
        source: Box<AftError>,
    },

    #[error("in fold {fold}: {source}")]
    InFold {
        fold: usize,
        #[source]
        source: Box<AftError>,
    },

    #[error("parse error in {path} at row {row}, column '{column}': {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("unknown node '{name}' in {path}")]
    UnknownNode { path: PathBuf, name: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl AftError {
    /// Short machine-readable kind, used for the CLI's structured error line.
    pub fn kind(&self) -> &'static str {
        match self {
            AftError::DimensionMismatch { .. } => "dimension_mismatch",
            AftError::InvalidData(_) => "invalid_data",
            AftError::InvalidParameter(_) => "invalid_parameter",
            AftError::DivergedEvaluation { .. } => "diverged_evaluation",
            AftError::AsymmetricAdjacency { .. } => "asymmetric_adjacency",
            AftError::NegativeWeight { .. } => "negative_weight",
            AftError::SelfLoop(_) => "self_loop",
            AftError::DegenerateScale { .. } => "degenerate_scale",
            AftError::ScaleNotConverged { .. } => "scale_not_converged",
            AftError::StepCollapse { .. } => "step_collapse",
            AftError::NonFiniteStart => "non_finite_start",
            AftError::NullProblem => "null_problem",
            AftError::InfeasibleFold { .. } => "infeasible_fold",
            AftError::NoComparablePairs => "no_comparable_pairs",
            AftError::InvalidScenario(_) => "invalid_scenario",
            AftError::AtLambda { source, .. } | AftError::InFold { source, .. } => source.kind(),
            AftError::Parse { .. } => "parse",
            AftError::UnknownNode { .. } => "unknown_node",
            AftError::Io { .. } => "io",
            AftError::Csv { .. } => "csv",
            AftError::Json { .. } => "json",
        }
    }
}
