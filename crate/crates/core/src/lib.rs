//! Laplace marginal-likelihood estimation for small feed-forward networks.
//!
//! The crate trains fully-connected networks by MAP estimation while
//! periodically fitting differentiable hyperparameters (prior precisions,
//! observation noise, softmax temperature) to a Laplace estimate of the log
//! marginal likelihood. Curvature can be the full generalized Gauss-Newton
//! matrix, the full empirical Fisher, a Kronecker-factored block
//! approximation, or either diagonal.
//!
//! ```no_run
//! use marglik_core::{config::ExperimentConfig, experiment::run_experiment};
//!
//! let cfg = ExperimentConfig::from_file("sinusoid.cfg").unwrap();
//! let record = run_experiment(&cfg).unwrap();
//! println!("log marglik = {}", record.final_marglik.log_marglik);
//! ```

pub mod config;
pub mod curvature;
pub mod data;
pub mod experiment;
pub mod likelihood;
pub mod linalg;
pub mod marglik;
pub mod metrics;
pub mod nn;
pub mod predictive;
pub mod record;
pub mod training;

use std::path::PathBuf;

pub use curvature::{CurvatureKind, CurvatureState};
pub use data::{Dataset, TargetRef, Targets};
pub use likelihood::{HyperParams, Likelihood, PriorPrecisions};
pub use linalg::{LinalgError, Matrix, Spectrum};
pub use marglik::{LogDetCache, MargLikReport};
pub use nn::{Activation, Mlp, NetworkSpec, ParamLayout, ParamVector};
pub use record::RunRecord;
pub use training::{Checkpoint, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },
    #[error("empty data")]
    EmptyData,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(
        "likelihood Hessian of example {example} is singular; use the direct or empirical-Fisher determinant instead"
    )]
    SingularLikelihoodBlock { example: usize },
    #[error("curvature has eigenvalue {value} below tolerance ({tolerance})")]
    NegativeCurvature { value: f64, tolerance: f64 },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
