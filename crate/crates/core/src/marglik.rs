//! Laplace log marginal likelihood, its log-determinants and hyperparameter
//! gradients.
//!
//! `log q(D) = log p(D, θ*) + (P/2) log 2π − ½ log|H|` with
//! `H = s·C + diag(δ)`, where `C` is the stored curvature and `s` its noise
//! scale. A [`LogDetCache`] is built once per curvature and then evaluated
//! cheaply at many hyperparameter values.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::curvature::{CurvatureData, CurvatureKind, CurvatureState};
use crate::data::{Dataset, Targets};
use crate::likelihood::{
    log_sum_exp_scaled, softmax_scaled_into, HyperParams, Likelihood, PriorPrecisions,
};
use crate::linalg::{dot, gram, gram_rows, sym_eigendecompose, Cholesky, Matrix, Spectrum};
use crate::nn::{Mlp, ParamLayout};
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Relative size below which negative curvature eigenvalues are treated as
/// round-off and clipped to zero.
pub const PSD_CLIP_TOL: f64 = 1e-9;

/// Full-curvature caches switch to a one-off eigendecomposition when a
/// shared prior is evaluated at least this many times per curvature.
pub const SPECTRAL_MIN_STEPS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MargLikReport {
    pub log_joint: f64,
    pub log_det: f64,
    pub log_marglik: f64,
    pub log_marglik_per_example: f64,
    pub hypers: HyperParams,
}

/// `log_joint + (P/2) log 2π − ½ log_det`, also normalized by `N`.
pub fn assemble_marglik(
    log_joint: f64,
    log_det: f64,
    p: usize,
    n: usize,
    hypers: HyperParams,
) -> MargLikReport {
    let log_marglik = log_joint + 0.5 * p as f64 * LN_2PI - 0.5 * log_det;
    MargLikReport {
        log_joint,
        log_det,
        log_marglik,
        log_marglik_per_example: log_marglik / n as f64,
        hypers,
    }
}

/// `log|H_lik + diag(prior)|` by Cholesky.
pub fn logdet_full_direct(h_lik: &Matrix, prior_diag: &[f64]) -> Result<f64> {
    if h_lik.rows() != prior_diag.len() {
        return Err(Error::Shape(format!(
            "{}x{} curvature with {} prior entries",
            h_lik.rows(),
            h_lik.cols(),
            prior_diag.len()
        )));
    }
    let mut h = h_lik.clone();
    h.add_diag(prior_diag);
    Ok(Cholesky::new(&h)?.log_det())
}

fn check_prior(prior_diag: &[f64], p: usize) -> Result<()> {
    if prior_diag.len() != p {
        return Err(Error::Shape(format!(
            "{} prior entries for {p} parameters",
            prior_diag.len()
        )));
    }
    if let Some(i) = prior_diag.iter().position(|&d| d.is_nan() || d <= 0.0) {
        return Err(Error::NonFinite {
            what: "prior precision",
            index: i,
        });
    }
    Ok(())
}

/// `J P⁻¹ Jᵀ` for diagonal `P`.
fn weighted_kernel(j: &Matrix, prior_diag: &[f64]) -> Matrix {
    let inv_sqrt: Vec<f64> = prior_diag.iter().map(|d| d.sqrt().recip()).collect();
    let mut scaled = j.clone();
    for r in 0..scaled.rows() {
        for (v, s) in scaled.row_mut(r).iter_mut().zip(&inv_sqrt) {
            *v *= s;
        }
    }
    gram_rows(&scaled)
}

/// `log|JᵀLJ + P| = log|J P⁻¹ Jᵀ + L⁻¹| + log|L| + log|P|` for stacked
/// Jacobians `j` (`NC x P`) and per-example blocks `lambda`.
///
/// Every block must be invertible, which rules out the softmax likelihood.
pub fn logdet_ggn_woodbury(j: &Matrix, lambda: &[Matrix], prior_diag: &[f64]) -> Result<f64> {
    check_prior(prior_diag, j.cols())?;
    let c = lambda.first().map_or(0, |l| l.rows());
    if c * lambda.len() != j.rows() {
        return Err(Error::Shape(format!(
            "{} Jacobian rows for {} blocks of size {c}",
            j.rows(),
            lambda.len()
        )));
    }
    let mut inner = weighted_kernel(j, prior_diag);
    let mut log_l = 0.0;
    for (n, l) in lambda.iter().enumerate() {
        let chol = Cholesky::new(l).map_err(|_| Error::SingularLikelihoodBlock { example: n })?;
        let ld = chol.factor().diag();
        let (lo, hi) = ld
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        if lo * lo <= 1e-12 * hi * hi {
            return Err(Error::SingularLikelihoodBlock { example: n });
        }
        log_l += chol.log_det();
        let inv = chol.inverse();
        for a in 0..c {
            for b in 0..c {
                inner[(n * c + a, n * c + b)] += inv[(a, b)];
            }
        }
    }
    let log_p: f64 = prior_diag.iter().map(|d| d.ln()).sum();
    Ok(Cholesky::new(&inner)?.log_det() + log_l + log_p)
}

/// `log|GᵀG + P| = log|G P⁻¹ Gᵀ + I_N| + log|P|`.
pub fn logdet_ef_woodbury(g: &Matrix, prior_diag: &[f64]) -> Result<f64> {
    check_prior(prior_diag, g.cols())?;
    let mut inner = weighted_kernel(g, prior_diag);
    inner.add_diag(&vec![1.0; g.rows()]);
    let log_p: f64 = prior_diag.iter().map(|d| d.ln()).sum();
    Ok(Cholesky::new(&inner)?.log_det() + log_p)
}

/// `Σ_i log(h_i + δ_i)`.
pub fn logdet_diag(h: &[f64], prior_diag: &[f64]) -> Result<f64> {
    check_prior(prior_diag, h.len())?;
    Ok(h.iter().zip(prior_diag).map(|(a, d)| (a + d).ln()).sum())
}

/// `log|B ⊗ A + δI| = Σ_ij log(b_i a_j + δ)` from factor eigenvalues.
pub fn kron_logdet(a_eigs: &[f64], b_eigs: &[f64], delta: f64) -> f64 {
    b_eigs
        .iter()
        .map(|&b| a_eigs.iter().map(|&a| (b * a + delta).ln()).sum::<f64>())
        .sum()
}

/// The damped alternative `log|(B + √δ I) ⊗ (A + √δ I)|`, which folds the
/// prior into the factors. Kept for comparison only.
pub fn damped_kron_logdet(a_eigs: &[f64], b_eigs: &[f64], delta: f64) -> f64 {
    let r = delta.sqrt();
    b_eigs
        .iter()
        .map(|&b| {
            a_eigs
                .iter()
                .map(|&a| ((b + r) * (a + r)).ln())
                .sum::<f64>()
        })
        .sum()
}

/// Kronecker-factored log-determinant of `H` for a KFAC curvature state.
pub fn logdet_kfac(
    state: &CurvatureState,
    layout: &ParamLayout,
    hypers: &HyperParams,
) -> Result<f64> {
    if state.kind() != CurvatureKind::Kfac {
        return Err(Error::Shape("logdet_kfac needs KFAC curvature".into()));
    }
    let cache = LogDetCache::build(state, layout, &hypers.prior, 1)?;
    Ok(cache.factorize(hypers)?.log_det())
}

/// `½ gᵀ H⁻¹ g`, the Taylor correction for a non-stationary `θ`.
pub fn correction_term(g: &[f64], h: &Matrix) -> Result<f64> {
    let x = crate::linalg::psd_solve(h, g)?;
    Ok(0.5 * dot(g, &x))
}

fn clip_spectrum(mut s: Spectrum) -> Result<Spectrum> {
    let max = s.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = PSD_CLIP_TOL * max;
    for v in &mut s.values {
        if *v < 0.0 {
            if *v < -tol {
                return Err(Error::NegativeCurvature {
                    value: *v,
                    tolerance: -tol,
                });
            }
            *v = 0.0;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone)]
struct KronLayer {
    a: Spectrum,
    b: Spectrum,
    weight: Range<usize>,
    bias: Range<usize>,
    weight_group: usize,
    bias_group: usize,
}

#[derive(Debug, Clone)]
enum Route {
    Diagonal {
        h: Vec<f64>,
    },
    Kronecker {
        layers: Vec<KronLayer>,
    },
    /// Stored `P x P` curvature; one Cholesky per evaluation.
    Dense {
        c: Matrix,
    },
    /// Factor `U` (`R x P`, `UᵀU = C`) with per-slot row kernels
    /// `K_k = U_k U_kᵀ`; one `R x R` Cholesky per evaluation.
    Kernel {
        u: Matrix,
        grams: Vec<Matrix>,
    },
    /// Eigenpairs of `C` with nonzero eigenvalues, rows of `vectors`; shared
    /// prior only.
    Spectral {
        values: Vec<f64>,
        vectors: Matrix,
    },
}

/// Everything about the curvature that does not depend on hyperparameters.
#[derive(Debug, Clone)]
pub struct LogDetCache {
    kind: CurvatureKind,
    num_params: usize,
    noise_power: i32,
    groups: Vec<Range<usize>>,
    assignment: Vec<usize>,
    num_slots: usize,
    route: Route,
    temperature_slope: f64,
}

impl LogDetCache {
    /// Prepares `state` for repeated evaluation. `steps_hint` is the number
    /// of evaluations expected before the curvature is rebuilt.
    pub fn build(
        state: &CurvatureState,
        layout: &ParamLayout,
        prior: &PriorPrecisions,
        steps_hint: usize,
    ) -> Result<Self> {
        prior.check_layout(layout)?;
        if state.num_params != layout.num_params() {
            return Err(Error::Shape(format!(
                "curvature over {} parameters, layout has {}",
                state.num_params,
                layout.num_params()
            )));
        }
        let groups: Vec<Range<usize>> = layout.groups().iter().map(|g| g.range()).collect();
        let p = layout.num_params();
        let route = match &state.data {
            CurvatureData::DiagGgn { h } | CurvatureData::DiagEf { h } => {
                Route::Diagonal { h: h.clone() }
            }
            CurvatureData::Kfac { layers } => {
                let mut out = Vec::with_capacity(layers.len());
                for (l, (f, shape)) in layers.iter().zip(layout.layers()).enumerate() {
                    out.push(KronLayer {
                        a: clip_spectrum(sym_eigendecompose(&f.a)?)?,
                        b: clip_spectrum(sym_eigendecompose(&f.b)?)?,
                        weight: shape.weight_range(),
                        bias: shape.bias_range(),
                        weight_group: shape.weight_group(l),
                        bias_group: shape.bias_group(l),
                    });
                }
                Route::Kronecker { layers: out }
            }
            CurvatureData::FullGgn { .. } | CurvatureData::FullEf { .. } => {
                let u = state.full_factor().expect("full structure");
                if prior.is_shared() && steps_hint >= SPECTRAL_MIN_STEPS {
                    spectral_route(&u)?
                } else if u.rows() >= p {
                    Route::Dense { c: gram(&u) }
                } else {
                    let mut grams = vec![Matrix::zeros(u.rows(), u.rows()); prior.num_slots()];
                    for (g, range) in groups.iter().enumerate() {
                        let k = gram_rows(&u.select_columns(range.clone()));
                        grams[prior.assignment[g]].add_scaled(&k, 1.0);
                    }
                    Route::Kernel { u, grams }
                }
            }
        };
        Ok(Self {
            kind: state.kind(),
            num_params: p,
            noise_power: state.noise_power,
            groups,
            assignment: prior.assignment.clone(),
            num_slots: prior.num_slots(),
            route,
            temperature_slope: 0.0,
        })
    }

    /// Sets `∂ log|H| / ∂ log T`, held fixed while the curvature is reused.
    pub fn with_temperature_slope(mut self, slope: f64) -> Self {
        self.temperature_slope = slope;
        self
    }

    pub fn temperature_slope(&self) -> f64 {
        self.temperature_slope
    }

    pub fn kind(&self) -> CurvatureKind {
        self.kind
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    /// Short name of the evaluation strategy, for logging.
    pub fn route_name(&self) -> &'static str {
        match self.route {
            Route::Diagonal { .. } => "diagonal",
            Route::Kronecker { .. } => "kronecker",
            Route::Dense { .. } => "dense",
            Route::Kernel { .. } => "kernel",
            Route::Spectral { .. } => "spectral",
        }
    }

    fn scale(&self, lik: &Likelihood) -> f64 {
        match lik {
            Likelihood::Gaussian { log_sigma2 } => (-(self.noise_power as f64) * log_sigma2).exp(),
            Likelihood::Categorical { .. } => 1.0,
        }
    }

    /// Factorizes `H` at `hypers`.
    pub fn factorize(&self, hypers: &HyperParams) -> Result<Factorization<'_>> {
        let prior = &hypers.prior;
        if prior.assignment != self.assignment {
            return Err(Error::Shape(
                "prior grouping differs from the cached one".into(),
            ));
        }
        let s = self.scale(&hypers.likelihood);
        let deltas = prior.group_deltas();
        let mut group_trace = vec![0.0; self.groups.len()];
        let mut log_det = 0.0;
        let inner = match &self.route {
            Route::Diagonal { h } => {
                for (g, r) in self.groups.iter().enumerate() {
                    let d = deltas[g];
                    for &hi in &h[r.clone()] {
                        let v = s * hi + d;
                        log_det += v.ln();
                        group_trace[g] += d / v;
                    }
                }
                Inner::None
            }
            Route::Kronecker { layers } => {
                for layer in layers {
                    let (dw, db) = (deltas[layer.weight_group], deltas[layer.bias_group]);
                    for &b in &layer.b.values {
                        for &a in &layer.a.values {
                            let v = s * b * a + dw;
                            log_det += v.ln();
                            group_trace[layer.weight_group] += dw / v;
                        }
                        let v = s * b + db;
                        log_det += v.ln();
                        group_trace[layer.bias_group] += db / v;
                    }
                }
                Inner::None
            }
            Route::Dense { c } => {
                let mut h = c.scale(s);
                let diag: Vec<f64> = (0..self.num_params)
                    .map(|i| deltas[self.group_of(i)])
                    .collect();
                h.add_diag(&diag);
                let chol = Cholesky::new_unchecked(&h)?;
                log_det = chol.log_det();
                let inv_diag = chol.inverse_diag();
                for (g, r) in self.groups.iter().enumerate() {
                    group_trace[g] = deltas[g] * inv_diag[r.clone()].iter().sum::<f64>();
                }
                Inner::Dense(chol)
            }
            Route::Kernel { u, grams } => {
                let slot_delta: Vec<f64> = prior.log_delta.iter().map(|l| l.exp()).collect();
                let r = u.rows();
                let mut m = Matrix::identity(r);
                for (k, kg) in grams.iter().enumerate() {
                    m.add_scaled(kg, s / slot_delta[k]);
                }
                let chol = Cholesky::new_unchecked(&m)?;
                log_det = chol.log_det();
                for (g, range) in self.groups.iter().enumerate() {
                    log_det += range.len() as f64 * deltas[g].ln();
                }
                let m_inv = chol.inverse();
                let mut slot_trace = vec![0.0; self.num_slots];
                for (k, kg) in grams.iter().enumerate() {
                    let tr = dot(m_inv.as_slice(), kg.as_slice());
                    slot_trace[k] = -(s / slot_delta[k]) * tr;
                }
                // Spread the correction across a slot's groups by size; only
                // slot totals are used downstream.
                let mut slot_size = vec![0usize; self.num_slots];
                for (g, range) in self.groups.iter().enumerate() {
                    slot_size[self.assignment[g]] += range.len();
                }
                for (g, range) in self.groups.iter().enumerate() {
                    let k = self.assignment[g];
                    group_trace[g] = range.len() as f64
                        + slot_trace[k] * range.len() as f64 / slot_size[k] as f64;
                }
                Inner::Kernel { chol }
            }
            Route::Spectral { values, .. } => {
                let d = deltas[0];
                let m = values.len();
                for &lam in values {
                    let v = s * lam + d;
                    log_det += v.ln();
                    group_trace[0] += d / v;
                }
                let rest = (self.num_params - m) as f64;
                log_det += rest * d.ln();
                group_trace[0] += rest;
                Inner::None
            }
        };
        let mut slot_traces = vec![0.0; self.num_slots];
        for (g, t) in group_trace.iter().enumerate() {
            slot_traces[self.assignment[g]] += t;
        }
        Ok(Factorization {
            cache: self,
            scale: s,
            deltas,
            log_det,
            slot_traces,
            inner,
        })
    }

    fn group_of(&self, i: usize) -> usize {
        self.groups
            .iter()
            .position(|r| r.contains(&i))
            .expect("index within layout")
    }
}

fn spectral_route(u: &Matrix) -> Result<Route> {
    let p = u.cols();
    if u.rows() >= p {
        let spec = clip_spectrum(sym_eigendecompose(&gram(u))?)?;
        let v = spec.vectors.expect("vectors requested");
        return Ok(Route::Spectral {
            values: spec.values,
            vectors: v.transpose(),
        });
    }
    let spec = clip_spectrum(sym_eigendecompose(&gram_rows(u))?)?;
    let v = spec.vectors.expect("vectors requested");
    let max = spec.values.iter().fold(0.0f64, |m, x| m.max(*x));
    let keep: Vec<usize> = (0..spec.values.len())
        .filter(|&i| spec.values[i] > 1e-12 * max && spec.values[i] > 0.0)
        .collect();
    let mut vectors = Matrix::zeros(keep.len(), p);
    let mut values = Vec::with_capacity(keep.len());
    for (row, &i) in keep.iter().enumerate() {
        let lam = spec.values[i];
        let col: Vec<f64> = (0..u.rows()).map(|r| v[(r, i)]).collect();
        let w = u.tr_matvec(&col)?;
        let norm = lam.sqrt();
        for (dst, x) in vectors.row_mut(row).iter_mut().zip(&w) {
            *dst = x / norm;
        }
        values.push(lam);
    }
    Ok(Route::Spectral { values, vectors })
}

#[derive(Debug)]
enum Inner {
    None,
    Dense(Cholesky),
    Kernel { chol: Cholesky },
}

/// `H` factorized at one hyperparameter value.
#[derive(Debug)]
pub struct Factorization<'a> {
    cache: &'a LogDetCache,
    scale: f64,
    deltas: Vec<f64>,
    log_det: f64,
    slot_traces: Vec<f64>,
    inner: Inner,
}

impl Factorization<'_> {
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `t_k = Σ_{g in slot k} δ_g Tr_g(H⁻¹)` for each prior slot.
    pub fn slot_traces(&self) -> &[f64] {
        &self.slot_traces
    }

    /// `H⁻¹ v`.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        let cache = self.cache;
        let s = self.scale;
        let mut out = vec![0.0; v.len()];
        match (&cache.route, &self.inner) {
            (Route::Diagonal { h }, _) => {
                for (g, r) in cache.groups.iter().enumerate() {
                    for i in r.clone() {
                        out[i] = v[i] / (s * h[i] + self.deltas[g]);
                    }
                }
            }
            (Route::Kronecker { layers }, _) => {
                for layer in layers {
                    let (qa, qb) = (
                        layer.a.vectors.as_ref().expect("vectors"),
                        layer.b.vectors.as_ref().expect("vectors"),
                    );
                    let (fo, fi) = (qb.rows(), qa.rows());
                    let w = Matrix::from_vec(fo, fi, v[layer.weight.clone()].to_vec())
                        .expect("weight shape");
                    let mut t = qb
                        .transpose()
                        .matmul(&w)
                        .and_then(|m| m.matmul(qa))
                        .expect("shapes");
                    let dw = self.deltas[layer.weight_group];
                    for i in 0..fo {
                        for j in 0..fi {
                            t[(i, j)] /= s * layer.b.values[i] * layer.a.values[j] + dw;
                        }
                    }
                    let back = qb
                        .matmul(&t)
                        .and_then(|m| m.matmul(&qa.transpose()))
                        .expect("shapes");
                    out[layer.weight.clone()].copy_from_slice(back.as_slice());

                    let db = self.deltas[layer.bias_group];
                    let mut tb = qb.tr_matvec(&v[layer.bias.clone()]).expect("bias shape");
                    for (x, b) in tb.iter_mut().zip(&layer.b.values) {
                        *x /= s * b + db;
                    }
                    out[layer.bias.clone()].copy_from_slice(&qb.matvec(&tb).expect("bias shape"));
                }
            }
            (Route::Dense { .. }, Inner::Dense(chol)) => out = chol.solve(v),
            (Route::Kernel { u, .. }, Inner::Kernel { chol }) => {
                let mut dinv_v = v.to_vec();
                for (g, r) in cache.groups.iter().enumerate() {
                    dinv_v[r.clone()]
                        .iter_mut()
                        .for_each(|x| *x /= self.deltas[g]);
                }
                let uv = u.matvec(&dinv_v).expect("factor shape");
                let z = chol.solve(&uv);
                let mut back = u.tr_matvec(&z).expect("factor shape");
                for (g, r) in cache.groups.iter().enumerate() {
                    back[r.clone()]
                        .iter_mut()
                        .for_each(|x| *x /= self.deltas[g]);
                }
                for i in 0..v.len() {
                    out[i] = dinv_v[i] - s * back[i];
                }
            }
            (Route::Spectral { values, vectors }, _) => {
                let d = self.deltas[0];
                for (o, x) in out.iter_mut().zip(v) {
                    *o = x / d;
                }
                for (k, &lam) in values.iter().enumerate() {
                    let w = vectors.row(k);
                    let coef = (1.0 / (s * lam + d) - 1.0 / d) * dot(w, v);
                    crate::linalg::axpy(coef, w, &mut out);
                }
            }
            _ => unreachable!("factorization matches its cache route"),
        }
        out
    }

    /// `J H⁻¹ Jᵀ` for a `C x P` Jacobian.
    pub fn sandwich(&self, j: &Matrix) -> Matrix {
        let c = j.rows();
        let solved: Vec<Vec<f64>> = (0..c).map(|r| self.solve(j.row(r))).collect();
        let mut out = Matrix::zeros(c, c);
        for a in 0..c {
            for b in 0..c {
                out[(a, b)] = dot(j.row(a), &solved[b]);
            }
        }
        out.symmetrized().unwrap_or(out)
    }
}

/// Log-likelihood statistics at the mode that determine how the data term
/// responds to the likelihood hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LoglikStats {
    Gaussian { sse: f64, count: usize },
    Categorical { logits: Matrix, labels: Vec<usize> },
}

/// What the marginal likelihood needs to know about `θ*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub n: usize,
    pub num_params: usize,
    pub group_sizes: Vec<usize>,
    pub group_sq_norms: Vec<f64>,
    pub stats: LoglikStats,
}

impl ModeSummary {
    pub fn new(mlp: &Mlp, params: &[f64], data: &Dataset) -> Result<Self> {
        let f = mlp.forward(params, &data.x)?;
        let stats = match &data.y {
            Targets::Real(y) => {
                if y.cols() != f.cols() {
                    return Err(Error::Shape(format!(
                        "{} targets for {} outputs",
                        y.cols(),
                        f.cols()
                    )));
                }
                let sse = f
                    .as_slice()
                    .iter()
                    .zip(y.as_slice())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                LoglikStats::Gaussian {
                    sse,
                    count: f.rows() * f.cols(),
                }
            }
            Targets::Class(labels) => {
                if let Some(i) = labels.iter().position(|&l| l >= f.cols()) {
                    return Err(Error::Shape(format!(
                        "label {} at {i} for {} classes",
                        labels[i],
                        f.cols()
                    )));
                }
                LoglikStats::Categorical {
                    logits: f,
                    labels: labels.clone(),
                }
            }
        };
        Ok(Self {
            n: data.len(),
            num_params: mlp.num_params(),
            group_sizes: mlp.layout().group_sizes(),
            group_sq_norms: mlp.layout().group_sq_norms(params),
            stats,
        })
    }

    pub fn log_likelihood(&self, lik: &Likelihood) -> f64 {
        match (&self.stats, *lik) {
            (LoglikStats::Gaussian { sse, count }, Likelihood::Gaussian { log_sigma2 }) => {
                -0.5 * *count as f64 * (LN_2PI + log_sigma2) - 0.5 * sse * (-log_sigma2).exp()
            }
            (
                LoglikStats::Categorical { logits, labels },
                Likelihood::Categorical { log_temperature },
            ) => {
                let inv_t = (-log_temperature).exp();
                labels
                    .iter()
                    .enumerate()
                    .map(|(n, &y)| {
                        let f = logits.row(n);
                        f[y] * inv_t - log_sum_exp_scaled(f, inv_t)
                    })
                    .sum()
            }
            _ => f64::NAN,
        }
    }

    /// `∂ log p(D | θ*) / ∂ (log σ² or log T)`.
    pub fn dloglik_dlog_param(&self, lik: &Likelihood) -> f64 {
        match (&self.stats, *lik) {
            (LoglikStats::Gaussian { sse, count }, Likelihood::Gaussian { log_sigma2 }) => {
                -0.5 * *count as f64 + 0.5 * sse * (-log_sigma2).exp()
            }
            (
                LoglikStats::Categorical { logits, labels },
                Likelihood::Categorical { log_temperature },
            ) => {
                let inv_t = (-log_temperature).exp();
                let c = logits.cols();
                let mut p = vec![0.0; c];
                labels
                    .iter()
                    .enumerate()
                    .map(|(n, &y)| {
                        let f = logits.row(n);
                        softmax_scaled_into(f, inv_t, &mut p);
                        (dot(&p, f) - f[y]) * inv_t
                    })
                    .sum()
            }
            _ => f64::NAN,
        }
    }

    pub fn log_prior(&self, prior: &PriorPrecisions) -> f64 {
        (0..self.group_sizes.len())
            .map(|g| {
                let ld = prior.log_delta[prior.assignment[g]];
                0.5 * self.group_sizes[g] as f64 * (ld - LN_2PI)
                    - 0.5 * ld.exp() * self.group_sq_norms[g]
            })
            .sum()
    }

    pub fn log_joint(&self, hypers: &HyperParams) -> f64 {
        self.log_likelihood(&hypers.likelihood) + self.log_prior(&hypers.prior)
    }
}

/// Log marginal likelihood and its gradient with respect to
/// [`HyperParams::to_vec`] at one hyperparameter value.
pub fn evaluate(
    cache: &LogDetCache,
    mode: &ModeSummary,
    hypers: &HyperParams,
) -> Result<(MargLikReport, Vec<f64>)> {
    if !hypers.is_finite() {
        return Err(Error::NonFinite {
            what: "hyperparameter",
            index: 0,
        });
    }
    let fact = cache.factorize(hypers)?;
    let report = assemble_marglik(
        mode.log_joint(hypers),
        fact.log_det(),
        mode.num_params,
        mode.n,
        hypers.clone(),
    );
    let grad = hyper_gradients(&fact, mode, hypers);
    Ok((report, grad))
}

/// Analytic `∂ log q / ∂ log(hyperparameter)`.
///
/// Prior slot `k`: `Σ_{g∈k} (D_g − δ_g‖θ_g‖²)/2 − t_k/2`.
/// Gaussian noise, curvature scaling as `σ^{-2m}`:
/// `−NC/2 + SSE/(2σ²) + (m/2)(P − Σ_k t_k)`.
/// Temperature: derivative of the data term plus `−½` times the cached
/// log-determinant slope, since the curvature itself is held fixed.
pub fn hyper_gradients(
    fact: &Factorization<'_>,
    mode: &ModeSummary,
    hypers: &HyperParams,
) -> Vec<f64> {
    let prior = &hypers.prior;
    let mut grad = vec![0.0; hypers.len()];
    for (g, &size) in mode.group_sizes.iter().enumerate() {
        let k = prior.assignment[g];
        grad[k] += 0.5 * (size as f64 - prior.group_delta(g) * mode.group_sq_norms[g]);
    }
    for (k, t) in fact.slot_traces().iter().enumerate() {
        grad[k] -= 0.5 * t;
    }
    let last = grad.len() - 1;
    grad[last] = mode.dloglik_dlog_param(&hypers.likelihood);
    if hypers.likelihood.is_gaussian() {
        let m = fact.cache.noise_power as f64;
        let total: f64 = fact.slot_traces().iter().sum();
        grad[last] += 0.5 * m * (mode.num_params as f64 - total);
    } else {
        grad[last] -= 0.5 * fact.cache.temperature_slope;
    }
    grad
}

/// Step in `log T` for the log-determinant slope.
const TEMPERATURE_STEP: f64 = 1e-4;

/// `∂ log|H| / ∂ log T` by central differences over curvature rebuilt at
/// perturbed temperatures.
pub fn temperature_logdet_slope(
    kind: CurvatureKind,
    mlp: &Mlp,
    params: &[f64],
    data: &Dataset,
    hypers: &HyperParams,
) -> Result<f64> {
    let logdet_at = |shift: f64| -> Result<f64> {
        let mut hp = hypers.clone();
        hp.likelihood = hp
            .likelihood
            .with_log_param(hypers.likelihood.log_param() + shift);
        let state = crate::curvature::accumulate(kind, mlp, params, data, &hp.likelihood)?;
        let cache = LogDetCache::build(&state, mlp.layout(), &hp.prior, 1)?;
        Ok(cache.factorize(&hp)?.log_det())
    };
    Ok((logdet_at(TEMPERATURE_STEP)? - logdet_at(-TEMPERATURE_STEP)?) / (2.0 * TEMPERATURE_STEP))
}

/// Builds the curvature at `θ*` and everything needed to evaluate `log q`
/// repeatedly around `hypers`.
pub fn prepare(
    kind: CurvatureKind,
    mlp: &Mlp,
    params: &[f64],
    data: &Dataset,
    hypers: &HyperParams,
    steps_hint: usize,
) -> Result<(LogDetCache, ModeSummary)> {
    let state = crate::curvature::accumulate(kind, mlp, params, data, &hypers.likelihood)?;
    let mut cache = LogDetCache::build(&state, mlp.layout(), &hypers.prior, steps_hint)?;
    if !hypers.likelihood.is_gaussian() {
        cache = cache
            .with_temperature_slope(temperature_logdet_slope(kind, mlp, params, data, hypers)?);
    }
    Ok((cache, ModeSummary::new(mlp, params, data)?))
}

/// Laplace log marginal likelihood and hyperparameter gradient at `θ*`.
pub fn laplace_marglik(
    kind: CurvatureKind,
    mlp: &Mlp,
    params: &[f64],
    data: &Dataset,
    hypers: &HyperParams,
) -> Result<(MargLikReport, Vec<f64>)> {
    let (cache, mode) = prepare(kind, mlp, params, data, hypers, 1)?;
    evaluate(&cache, &mode, hypers)
}

/// `log q` alone, without gradients or temperature slope.
pub fn log_marglik_at(
    kind: CurvatureKind,
    mlp: &Mlp,
    params: &[f64],
    data: &Dataset,
    hypers: &HyperParams,
) -> Result<MargLikReport> {
    let state = crate::curvature::accumulate(kind, mlp, params, data, &hypers.likelihood)?;
    let cache = LogDetCache::build(&state, mlp.layout(), &hypers.prior, 1)?;
    let fact = cache.factorize(hypers)?;
    let mode = ModeSummary::new(mlp, params, data)?;
    Ok(assemble_marglik(
        mode.log_joint(hypers),
        fact.log_det(),
        mode.num_params,
        mode.n,
        hypers.clone(),
    ))
}
