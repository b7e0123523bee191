//! Weibull accelerated failure time regression with a lasso + graph-Laplacian
//! penalty, fitted by proximal gradient descent, with cross-validated tuning and
//! a synthetic regulatory-network benchmark.

pub mod error;
pub mod evaluation;
pub mod io;
pub mod network;
pub mod pipeline;
pub mod rng;
pub mod scale;
pub mod selection;
pub mod solver;
pub mod spectral;
pub mod survival;
pub mod synthetic;

pub use error::{AftError, Result};
pub use network::{build_laplacian, Adjacency, NetworkPrior, PenaltyConfig};
pub use scale::{estimate_sigma, ScaleFit};
pub use selection::{cv_pl, make_lambda_grid, CvOptions, CvReport, LambdaGrid};
pub use solver::{fit_path, prox_grad_fit, FitResult, SolutionPath, SolverOptions};
pub use survival::{ModelParams, SurvivalDataset};
