//! Likelihoods, per-group Gaussian priors and the differentiable
//! hyperparameters that parameterize them.
//!
//! All hyperparameters are stored in log space so that gradient steps never
//! leave the positive orthant.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::data::{TargetRef, Targets};
use crate::linalg::Matrix;
use crate::nn::ParamLayout;
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Observation model `p(y | f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Likelihood {
    /// `y ~ N(f, σ² I)`.
    Gaussian { log_sigma2: f64 },
    /// `y ~ Categorical(softmax(f / T))`.
    Categorical { log_temperature: f64 },
}

impl Likelihood {
    pub fn gaussian(sigma2: f64) -> Self {
        Likelihood::Gaussian {
            log_sigma2: sigma2.ln(),
        }
    }

    pub fn categorical(temperature: f64) -> Self {
        Likelihood::Categorical {
            log_temperature: temperature.ln(),
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, Likelihood::Gaussian { .. })
    }

    /// The single log-space hyperparameter of this likelihood.
    pub fn log_param(&self) -> f64 {
        match *self {
            Likelihood::Gaussian { log_sigma2 } => log_sigma2,
            Likelihood::Categorical { log_temperature } => log_temperature,
        }
    }

    pub fn with_log_param(&self, v: f64) -> Self {
        match self {
            Likelihood::Gaussian { .. } => Likelihood::Gaussian { log_sigma2: v },
            Likelihood::Categorical { .. } => Likelihood::Categorical { log_temperature: v },
        }
    }

    pub fn param_name(&self) -> &'static str {
        match self {
            Likelihood::Gaussian { .. } => "log_sigma2",
            Likelihood::Categorical { .. } => "log_temperature",
        }
    }

    /// σ² for Gaussian, T for categorical.
    pub fn natural_param(&self) -> f64 {
        self.log_param().exp()
    }

    /// `log p(y | f)` for one example.
    pub fn log_lik_row(&self, f: &[f64], y: TargetRef<'_>) -> f64 {
        match (*self, y) {
            (Likelihood::Gaussian { log_sigma2 }, TargetRef::Real(y)) => {
                let s2 = log_sigma2.exp();
                f.iter()
                    .zip(y)
                    .map(|(fi, yi)| -0.5 * (LN_2PI + log_sigma2) - (yi - fi).powi(2) / (2.0 * s2))
                    .sum()
            }
            (Likelihood::Categorical { log_temperature }, TargetRef::Class(k)) => {
                let t = log_temperature.exp();
                f[k] / t - log_sum_exp_scaled(f, 1.0 / t)
            }
            _ => f64::NAN,
        }
    }

    /// `∇_f log p(y | f)`.
    pub fn grad_wrt_f(&self, f: &[f64], y: TargetRef<'_>, out: &mut [f64]) {
        match (*self, y) {
            (Likelihood::Gaussian { log_sigma2 }, TargetRef::Real(y)) => {
                let inv = (-log_sigma2).exp();
                for ((o, fi), yi) in out.iter_mut().zip(f).zip(y) {
                    *o = (yi - fi) * inv;
                }
            }
            (Likelihood::Categorical { log_temperature }, TargetRef::Class(k)) => {
                let t = log_temperature.exp();
                softmax_scaled_into(f, 1.0 / t, out);
                for (c, o) in out.iter_mut().enumerate() {
                    let onehot = if c == k { 1.0 } else { 0.0 };
                    *o = (onehot - *o) / t;
                }
            }
            _ => out.iter_mut().for_each(|o| *o = f64::NAN),
        }
    }

    /// `Λ(y; f) = -∇²_ff log p(y | f)`; independent of `y` for both models.
    pub fn hessian(&self, f: &[f64]) -> Matrix {
        let c = f.len();
        match *self {
            Likelihood::Gaussian { log_sigma2 } => Matrix::from_diag(&vec![(-log_sigma2).exp(); c]),
            Likelihood::Categorical { log_temperature } => {
                let t = log_temperature.exp();
                let mut p = vec![0.0; c];
                softmax_scaled_into(f, 1.0 / t, &mut p);
                categorical_hessian(&p, t)
            }
        }
    }

    /// Hessian with the Gaussian `1/σ²` factor removed. Curvature is
    /// accumulated with this and rescaled analytically afterwards.
    pub fn unscaled_hessian(&self, f: &[f64]) -> Matrix {
        match self {
            Likelihood::Gaussian { .. } => Matrix::identity(f.len()),
            Likelihood::Categorical { .. } => self.hessian(f),
        }
    }

    /// Power `k` such that curvature built from this likelihood scales as
    /// `σ^{-2k}` (GGN-type: 1, EF-type: 2). Zero for categorical models.
    pub fn noise_power(&self, empirical_fisher: bool) -> i32 {
        match self {
            Likelihood::Gaussian { .. } if empirical_fisher => 2,
            Likelihood::Gaussian { .. } => 1,
            Likelihood::Categorical { .. } => 0,
        }
    }
}

fn categorical_hessian(p: &[f64], t: f64) -> Matrix {
    let c = p.len();
    let inv_t2 = 1.0 / (t * t);
    let mut h = Matrix::zeros(c, c);
    for i in 0..c {
        for j in 0..c {
            let d = if i == j { p[i] } else { 0.0 };
            h[(i, j)] = (d - p[i] * p[j]) * inv_t2;
        }
    }
    h
}

/// `log Σ exp(s·x)` with max shift.
pub fn log_sum_exp_scaled(x: &[f64], s: f64) -> f64 {
    let m = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(s * v));
    if !m.is_finite() {
        return m;
    }
    m + x.iter().map(|&v| (s * v - m).exp()).sum::<f64>().ln()
}

/// `softmax(s·x)` into `out`.
pub fn softmax_scaled_into(x: &[f64], s: f64, out: &mut [f64]) {
    let m = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(s * v));
    let mut z = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (s * v - m).exp();
        z += *o;
    }
    out.iter_mut().for_each(|o| *o /= z);
}

pub fn softmax(x: &[f64], temperature: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    softmax_scaled_into(x, 1.0 / temperature, &mut out);
    out
}

/// Total log-likelihood `Σ_n log p(y_n | f_n)` over a batch of outputs.
pub fn log_likelihood(f: &Matrix, y: &Targets, lik: &Likelihood) -> Result<f64> {
    if f.rows() != y.len() {
        return Err(Error::Shape(format!(
            "{} outputs for {} targets",
            f.rows(),
            y.len()
        )));
    }
    let mut total = 0.0;
    for n in 0..f.rows() {
        let v = lik.log_lik_row(f.row(n), y.get(n));
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: "log-likelihood",
                index: n,
            });
        }
        total += v;
    }
    Ok(total)
}

/// `Λ(y; f)` for one output row.
pub fn likelihood_hessian(f: &[f64], lik: &Likelihood) -> Matrix {
    lik.hessian(f)
}

/// `∇_f log p(y | f)` for one output row.
pub fn loglik_grad_wrt_f(f: &[f64], y: TargetRef<'_>, lik: &Likelihood) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    lik.grad_wrt_f(f, y, &mut out);
    out
}

/// Log prior precisions, one per hyperparameter slot, plus the map from
/// layout groups to slots. Per-group priors use one slot per group; a shared
/// prior maps every group to slot 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorPrecisions {
    pub log_delta: Vec<f64>,
    pub assignment: Vec<usize>,
}

impl PriorPrecisions {
    /// One precision per parameter group, all initialized to `delta`.
    pub fn per_group(layout: &ParamLayout, delta: f64) -> Self {
        let g = layout.groups().len();
        Self {
            log_delta: vec![delta.ln(); g],
            assignment: (0..g).collect(),
        }
    }

    /// A single precision shared by every group.
    pub fn shared(layout: &ParamLayout, delta: f64) -> Self {
        Self {
            log_delta: vec![delta.ln()],
            assignment: vec![0; layout.groups().len()],
        }
    }

    pub fn is_shared(&self) -> bool {
        self.log_delta.len() == 1
    }

    pub fn num_slots(&self) -> usize {
        self.log_delta.len()
    }

    pub fn num_groups(&self) -> usize {
        self.assignment.len()
    }

    /// δ for layout group `g`.
    pub fn group_delta(&self, g: usize) -> f64 {
        self.log_delta[self.assignment[g]].exp()
    }

    pub fn group_deltas(&self) -> Vec<f64> {
        (0..self.assignment.len())
            .map(|g| self.group_delta(g))
            .collect()
    }

    pub fn check_layout(&self, layout: &ParamLayout) -> Result<()> {
        if self.assignment.len() != layout.groups().len() {
            return Err(Error::Shape(format!(
                "prior covers {} groups, layout has {}",
                self.assignment.len(),
                layout.groups().len()
            )));
        }
        if self.assignment.iter().any(|&k| k >= self.log_delta.len()) {
            return Err(Error::Shape("prior assignment out of range".into()));
        }
        Ok(())
    }
}

/// `log p(θ) = Σ_l (D_l/2)(log δ_l − log 2π) − (δ_l/2)‖θ_l‖²`.
pub fn log_prior(params: &[f64], layout: &ParamLayout, prior: &PriorPrecisions) -> f64 {
    layout
        .groups()
        .iter()
        .enumerate()
        .map(|(g, grp)| {
            let ld = prior.log_delta[prior.assignment[g]];
            let sq: f64 = params[grp.range()].iter().map(|v| v * v).sum();
            0.5 * grp.len as f64 * (ld - LN_2PI) - 0.5 * ld.exp() * sq
        })
        .sum()
}

/// Diagonal of `P_θ = -∇²log p(θ)`.
pub fn prior_hessian_diag(prior: &PriorPrecisions, layout: &ParamLayout) -> Vec<f64> {
    let mut out = vec![0.0; layout.num_params()];
    for (g, grp) in layout.groups().iter().enumerate() {
        let d = prior.group_delta(g);
        out[grp.range()].iter_mut().for_each(|v| *v = d);
    }
    out
}

/// The differentiable hyperparameters of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub prior: PriorPrecisions,
    pub likelihood: Likelihood,
}

impl HyperParams {
    pub fn new(prior: PriorPrecisions, likelihood: Likelihood) -> Self {
        Self { prior, likelihood }
    }

    /// Number of entries in [`HyperParams::to_vec`].
    pub fn len(&self) -> usize {
        self.prior.num_slots() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat log-space vector: prior slots first, likelihood parameter last.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.prior.log_delta.clone();
        v.push(self.likelihood.log_param());
        v
    }

    pub fn set_from_slice(&mut self, v: &[f64]) {
        let k = self.prior.num_slots();
        self.prior.log_delta.copy_from_slice(&v[..k]);
        self.likelihood = self.likelihood.with_log_param(v[k]);
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = if self.prior.is_shared() {
            vec!["log_delta".to_string()]
        } else {
            (0..self.prior.num_slots())
                .map(|k| format!("log_delta_{k}"))
                .collect()
        };
        names.push(self.likelihood.param_name().to_string());
        names
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}

/// `-(D/2) log 2π`, handy for closed forms in tests.
pub fn gaussian_norm_const(dim: usize) -> f64 {
    -0.5 * dim as f64 * (2.0 * PI).ln()
}
