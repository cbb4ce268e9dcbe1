//! MAP and linearized-Laplace predictive distributions.
//!
//! The Bayesian predictive linearizes the network around `θ*`, so the
//! posterior over outputs at `x` is `N(f(x, θ*), J(x) Σ J(x)ᵀ)` with
//! `Σ = H⁻¹`. Regression uses the closed form; classification averages the
//! softmax over samples drawn in output space.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::curvature::CurvatureKind;
use crate::data::Dataset;
use crate::likelihood::{softmax, HyperParams, Likelihood};
use crate::linalg::{Cholesky, Matrix};
use crate::marglik::LogDetCache;
use crate::nn::{ForwardTrace, Mlp};
use crate::{Error, Result};

/// Default number of output-space samples for classification.
pub const DEFAULT_SAMPLES: usize = 1000;

/// Relative jitter added to the output covariance before sampling.
const COV_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    /// Per input and output: mean and epistemic variance `[JΣJᵀ]_cc`; per
    /// output: observation variance `σ²`.
    Regression {
        mean: Matrix,
        epistemic_var: Matrix,
        aleatoric_var: Vec<f64>,
    },
    /// Class probabilities, one row per input.
    Classification { probs: Matrix },
}

impl Predictions {
    pub fn total_var(&self) -> Option<Matrix> {
        match self {
            Predictions::Regression {
                epistemic_var,
                aleatoric_var,
                ..
            } => {
                let mut t = epistemic_var.clone();
                for n in 0..t.rows() {
                    for (v, a) in t.row_mut(n).iter_mut().zip(aleatoric_var) {
                        *v += a;
                    }
                }
                Some(t)
            }
            Predictions::Classification { .. } => None,
        }
    }
}

/// `p(y | f(x, θ*))`.
pub fn predict_map(mlp: &Mlp, params: &[f64], x: &Matrix, lik: &Likelihood) -> Result<Predictions> {
    let f = mlp.forward(params, x)?;
    Ok(match *lik {
        Likelihood::Gaussian { log_sigma2 } => Predictions::Regression {
            epistemic_var: Matrix::zeros(f.rows(), f.cols()),
            aleatoric_var: vec![log_sigma2.exp(); f.cols()],
            mean: f,
        },
        Likelihood::Categorical { log_temperature } => {
            let t = log_temperature.exp();
            let mut probs = Matrix::zeros(f.rows(), f.cols());
            for n in 0..f.rows() {
                probs.row_mut(n).copy_from_slice(&softmax(f.row(n), t));
            }
            Predictions::Classification { probs }
        }
    })
}

/// Laplace posterior `N(θ*, H⁻¹)` in a form that can act with `H⁻¹`.
#[derive(Debug, Clone)]
pub struct PosteriorApprox {
    pub mlp: Mlp,
    pub params: Vec<f64>,
    pub hypers: HyperParams,
    pub samples: usize,
    pub seed: u64,
    cache: LogDetCache,
}

impl PosteriorApprox {
    pub fn new(
        kind: CurvatureKind,
        mlp: &Mlp,
        params: &[f64],
        data: &Dataset,
        hypers: &HyperParams,
    ) -> Result<Self> {
        let state = crate::curvature::accumulate(kind, mlp, params, data, &hypers.likelihood)?;
        let cache = LogDetCache::build(&state, mlp.layout(), &hypers.prior, 1)?;
        Ok(Self {
            mlp: mlp.clone(),
            params: params.to_vec(),
            hypers: hypers.clone(),
            samples: DEFAULT_SAMPLES,
            seed: 0,
            cache,
        })
    }

    pub fn with_samples(mut self, samples: usize, seed: u64) -> Self {
        self.samples = samples;
        self.seed = seed;
        self
    }

    pub fn log_det(&self) -> Result<f64> {
        Ok(self.cache.factorize(&self.hypers)?.log_det())
    }

    /// Means `f(x_n, θ*)` and covariances `J(x_n) Σ J(x_n)ᵀ` for every row.
    pub fn function_space(&self, x: &Matrix) -> Result<(Matrix, Vec<Matrix>)> {
        if x.cols() != self.mlp.spec().input_dim {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.mlp.spec().input_dim
            )));
        }
        let fact = self.cache.factorize(&self.hypers)?;
        let c = self.mlp.output_dim();
        let mut mean = Matrix::zeros(x.rows(), c);
        let mut covs = Vec::with_capacity(x.rows());
        let mut trace = ForwardTrace::default();
        for n in 0..x.rows() {
            self.mlp.forward_trace(&self.params, x.row(n), &mut trace);
            mean.row_mut(n).copy_from_slice(trace.output());
            let j = self.mlp.jacobian_one(&self.params, &trace);
            covs.push(fact.sandwich(&j));
        }
        Ok((mean, covs))
    }

    /// `J(x) Σ J(x)ᵀ` for a single input.
    pub fn function_space_covariance(&self, x: &[f64]) -> Result<Matrix> {
        let row = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.function_space(&row)?.1.remove(0))
    }
}

pub fn predict_bayes_regression(post: &PosteriorApprox, x: &Matrix) -> Result<Predictions> {
    let Likelihood::Gaussian { log_sigma2 } = post.hypers.likelihood else {
        return Err(Error::Shape(
            "regression predictive needs a Gaussian likelihood".into(),
        ));
    };
    let (mean, covs) = post.function_space(x)?;
    let mut epistemic_var = Matrix::zeros(mean.rows(), mean.cols());
    for (n, cov) in covs.iter().enumerate() {
        for (c, v) in cov.diag().into_iter().enumerate() {
            epistemic_var[(n, c)] = v.max(0.0);
        }
    }
    Ok(Predictions::Regression {
        aleatoric_var: vec![log_sigma2.exp(); mean.cols()],
        mean,
        epistemic_var,
    })
}

/// Monte Carlo average of `softmax(f_s / T)` with `f_s ~ N(f(x), JΣJᵀ)`.
pub fn predict_bayes_classification(post: &PosteriorApprox, x: &Matrix) -> Result<Predictions> {
    let Likelihood::Categorical { log_temperature } = post.hypers.likelihood else {
        return Err(Error::Shape(
            "classification predictive needs a categorical likelihood".into(),
        ));
    };
    if post.samples == 0 {
        return Err(Error::Config(vec!["sample count must be >= 1".into()]));
    }
    let t = log_temperature.exp();
    let (mean, covs) = post.function_space(x)?;
    let c = mean.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(post.seed);
    let mut probs = Matrix::zeros(mean.rows(), c);
    let mut z = vec![0.0; c];
    let mut f = vec![0.0; c];
    for (n, cov) in covs.into_iter().enumerate() {
        let tr = cov.trace();
        if tr <= 0.0 {
            probs.row_mut(n).copy_from_slice(&softmax(mean.row(n), t));
            continue;
        }
        let mut jittered = cov;
        jittered.add_diag(&vec![COV_JITTER * tr; c]);
        let chol = Cholesky::new_unchecked(&jittered)?;
        let l = chol.factor();
        let acc = probs.row_mut(n);
        for _ in 0..post.samples {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            for i in 0..c {
                f[i] = mean[(n, i)] + (0..=i).map(|k| l[(i, k)] * z[k]).sum::<f64>();
            }
            for (a, p) in acc.iter_mut().zip(softmax(&f, t)) {
                *a += p;
            }
        }
        acc.iter_mut().for_each(|v| *v /= post.samples as f64);
    }
    Ok(Predictions::Classification { probs })
}

/// Bayesian predictive for whichever likelihood the posterior carries.
pub fn predict_bayes(post: &PosteriorApprox, x: &Matrix) -> Result<Predictions> {
    if post.hypers.likelihood.is_gaussian() {
        predict_bayes_regression(post, x)
    } else {
        predict_bayes_classification(post, x)
    }
}
