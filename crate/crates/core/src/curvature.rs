//! Curvature of the negative log-likelihood at a parameter value.
//!
//! Gaussian curvature is stored with the observation noise factored out and
//! rescaled by [`CurvatureState::scale`]; categorical curvature embeds the
//! temperature at accumulation time.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TargetRef};
use crate::likelihood::{softmax_scaled_into, Likelihood};
use crate::linalg::{gram, Matrix};
use crate::nn::{ForwardTrace, Mlp};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureKind {
    FullGgn,
    FullEf,
    Kfac,
    DiagGgn,
    DiagEf,
}

impl CurvatureKind {
    pub const ALL: [CurvatureKind; 5] = [
        CurvatureKind::FullGgn,
        CurvatureKind::FullEf,
        CurvatureKind::Kfac,
        CurvatureKind::DiagGgn,
        CurvatureKind::DiagEf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CurvatureKind::FullGgn => "full-ggn",
            CurvatureKind::FullEf => "full-ef",
            CurvatureKind::Kfac => "kfac",
            CurvatureKind::DiagGgn => "diag-ggn",
            CurvatureKind::DiagEf => "diag-ef",
        }
    }

    pub fn is_empirical_fisher(self) -> bool {
        matches!(self, CurvatureKind::FullEf | CurvatureKind::DiagEf)
    }
}

impl std::fmt::Display for CurvatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CurvatureKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        CurvatureKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                format!("unknown curvature `{s}` (expected full-ggn, full-ef, kfac, diag-ggn or diag-ef)")
            })
    }
}

/// Kronecker factors of one layer.
///
/// With the weight matrix vectorized row-major, the weight block is
/// approximated by `b ⊗ a`. The exact bias block `Σ_n S_n` coincides with
/// `b`, so it is not stored separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KfacFactors {
    /// `(1/N) Σ_n a_n a_nᵀ` over layer inputs.
    pub a: Matrix,
    /// `Σ_n (∂f/∂z)ᵀ Λ_n (∂f/∂z)` over the layer's pre-activations.
    pub b: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CurvatureData {
    /// Stacked Jacobians (`NC x P`) and per-example `Λ` blocks.
    FullGgn {
        j: Matrix,
        lambda: Vec<Matrix>,
    },
    /// Per-example gradients (`N x P`).
    FullEf {
        g: Matrix,
    },
    Kfac {
        layers: Vec<KfacFactors>,
    },
    DiagGgn {
        h: Vec<f64>,
    },
    DiagEf {
        h: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureState {
    pub n: usize,
    pub c: usize,
    pub num_params: usize,
    /// The stored curvature is multiplied by `σ^{-2k}` with this `k`.
    pub noise_power: i32,
    pub data: CurvatureData,
}

impl CurvatureState {
    pub fn kind(&self) -> CurvatureKind {
        match self.data {
            CurvatureData::FullGgn { .. } => CurvatureKind::FullGgn,
            CurvatureData::FullEf { .. } => CurvatureKind::FullEf,
            CurvatureData::Kfac { .. } => CurvatureKind::Kfac,
            CurvatureData::DiagGgn { .. } => CurvatureKind::DiagGgn,
            CurvatureData::DiagEf { .. } => CurvatureKind::DiagEf,
        }
    }

    /// Factor turning stored curvature into the likelihood Hessian term.
    pub fn scale(&self, lik: &Likelihood) -> f64 {
        match lik {
            Likelihood::Gaussian { log_sigma2 } => (-(self.noise_power as f64) * log_sigma2).exp(),
            Likelihood::Categorical { .. } => 1.0,
        }
    }

    /// Rows `U` with `UᵀU` equal to the stored full curvature.
    pub fn full_factor(&self) -> Option<Matrix> {
        match &self.data {
            CurvatureData::FullGgn { j, lambda } => Some(ggn_factor(j, lambda)),
            CurvatureData::FullEf { g } => Some(g.clone()),
            _ => None,
        }
    }

    /// Dense `P x P` likelihood curvature, unscaled. Intended for
    /// verification and small problems.
    pub fn dense(&self, mlp: &Mlp) -> Matrix {
        let p = self.num_params;
        match &self.data {
            CurvatureData::FullGgn { .. } | CurvatureData::FullEf { .. } => {
                gram(&self.full_factor().expect("full structure"))
            }
            CurvatureData::DiagGgn { h } | CurvatureData::DiagEf { h } => Matrix::from_diag(h),
            CurvatureData::Kfac { layers } => {
                let mut out = Matrix::zeros(p, p);
                for (shape, f) in mlp.layout().layers().iter().zip(layers) {
                    let wb = f.b.kron(&f.a);
                    let w0 = shape.weight_offset;
                    for i in 0..wb.rows() {
                        for j in 0..wb.cols() {
                            out[(w0 + i, w0 + j)] = wb[(i, j)];
                        }
                    }
                    let b0 = shape.bias_offset;
                    for i in 0..f.b.rows() {
                        for j in 0..f.b.cols() {
                            out[(b0 + i, b0 + j)] = f.b[(i, j)];
                        }
                    }
                }
                out
            }
        }
    }

    /// Diagonal of the stored curvature, unscaled.
    pub fn diagonal(&self, mlp: &Mlp) -> Vec<f64> {
        match &self.data {
            CurvatureData::DiagGgn { h } | CurvatureData::DiagEf { h } => h.clone(),
            CurvatureData::Kfac { .. } => self.dense(mlp).diag(),
            _ => {
                let u = self.full_factor().expect("full structure");
                let mut d = vec![0.0; self.num_params];
                for r in 0..u.rows() {
                    for (acc, v) in d.iter_mut().zip(u.row(r)) {
                        *acc += v * v;
                    }
                }
                d
            }
        }
    }

    /// Merges curvature accumulated on disjoint shards.
    pub fn combine(&self, other: &CurvatureState) -> Result<CurvatureState> {
        if self.num_params != other.num_params
            || self.c != other.c
            || self.noise_power != other.noise_power
        {
            return Err(Error::Shape(
                "cannot combine curvature of different models".into(),
            ));
        }
        let n = self.n + other.n;
        let data = match (&self.data, &other.data) {
            (
                CurvatureData::FullGgn { j: j1, lambda: l1 },
                CurvatureData::FullGgn { j: j2, lambda: l2 },
            ) => CurvatureData::FullGgn {
                j: Matrix::vstack(&[j1.clone(), j2.clone()])?,
                lambda: l1.iter().chain(l2).cloned().collect(),
            },
            (CurvatureData::FullEf { g: g1 }, CurvatureData::FullEf { g: g2 }) => {
                CurvatureData::FullEf {
                    g: Matrix::vstack(&[g1.clone(), g2.clone()])?,
                }
            }
            (CurvatureData::DiagGgn { h: h1 }, CurvatureData::DiagGgn { h: h2 }) => {
                CurvatureData::DiagGgn {
                    h: h1.iter().zip(h2).map(|(a, b)| a + b).collect(),
                }
            }
            (CurvatureData::DiagEf { h: h1 }, CurvatureData::DiagEf { h: h2 }) => {
                CurvatureData::DiagEf {
                    h: h1.iter().zip(h2).map(|(a, b)| a + b).collect(),
                }
            }
            (CurvatureData::Kfac { layers: a }, CurvatureData::Kfac { layers: b }) => {
                let (w1, w2) = (self.n as f64 / n as f64, other.n as f64 / n as f64);
                CurvatureData::Kfac {
                    layers: a
                        .iter()
                        .zip(b)
                        .map(|(x, y)| {
                            let mut am = x.a.scale(w1);
                            am.add_scaled(&y.a, w2);
                            let mut bm = x.b.clone();
                            bm.add_scaled(&y.b, 1.0);
                            KfacFactors { a: am, b: bm }
                        })
                        .collect(),
                }
            }
            _ => {
                return Err(Error::Shape(
                    "cannot combine different curvature kinds".into(),
                ))
            }
        };
        Ok(CurvatureState {
            n,
            c: self.c,
            num_params: self.num_params,
            noise_power: self.noise_power,
            data,
        })
    }
}

/// `Λ^{1/2}`-weighted Jacobian rows, stacked.
fn ggn_factor(j: &Matrix, lambda: &[Matrix]) -> Matrix {
    let c = lambda.first().map_or(1, |l| l.rows());
    let mut out = Matrix::zeros(j.rows(), j.cols());
    for (n, l) in lambda.iter().enumerate() {
        let root = psd_root(l);
        for r in 0..c {
            let dst = out.row_mut(n * c + r);
            for k in 0..c {
                let w = root[(r, k)];
                if w != 0.0 {
                    crate::linalg::axpy(w, j.row(n * c + k), dst);
                }
            }
        }
    }
    out
}

fn psd_root(l: &Matrix) -> Matrix {
    let spec = crate::linalg::sym_eigendecompose(l).expect("likelihood Hessian is symmetric");
    let v = spec.vectors.expect("vectors requested");
    let n = l.rows();
    let mut out = Matrix::zeros(n, n);
    for (k, &lam) in spec.values.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += s * v[(i, k)] * v[(j, k)];
            }
        }
    }
    out
}

/// Rows `R` with `RᵀR = Λ(f)`, noise-free for Gaussian models.
///
/// For the softmax, `R_ij = √p_i (δ_ij − p_j) / T`.
fn lambda_root_into(lik: &Likelihood, f: &[f64], out: &mut Matrix) {
    let c = f.len();
    match *lik {
        Likelihood::Gaussian { .. } => {
            out.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
            for i in 0..c {
                out[(i, i)] = 1.0;
            }
        }
        Likelihood::Categorical { log_temperature } => {
            let t = log_temperature.exp();
            let mut p = vec![0.0; c];
            softmax_scaled_into(f, 1.0 / t, &mut p);
            for i in 0..c {
                let s = p[i].sqrt() / t;
                for j in 0..c {
                    let d = if i == j { 1.0 } else { 0.0 };
                    out[(i, j)] = s * (d - p[j]);
                }
            }
        }
    }
}

/// Noise-free `∇_f log p(y | f)`: `y − f` for Gaussian models.
fn residual_into(lik: &Likelihood, f: &[f64], y: TargetRef<'_>, out: &mut [f64]) {
    match (lik, y) {
        (Likelihood::Gaussian { .. }, TargetRef::Real(y)) => {
            for ((o, fi), yi) in out.iter_mut().zip(f).zip(y) {
                *o = yi - fi;
            }
        }
        _ => lik.grad_wrt_f(f, y, out),
    }
}

fn check_inputs(mlp: &Mlp, params: &[f64], data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if params.len() != mlp.num_params() {
        return Err(Error::Shape(format!(
            "expected {} parameters, got {}",
            mlp.num_params(),
            params.len()
        )));
    }
    if data.input_dim() != mlp.spec().input_dim {
        return Err(Error::Shape(format!(
            "data has {} inputs, network expects {}",
            data.input_dim(),
            mlp.spec().input_dim
        )));
    }
    Ok(())
}

fn state(
    mlp: &Mlp,
    data: &Dataset,
    lik: &Likelihood,
    ef: bool,
    data_: CurvatureData,
) -> CurvatureState {
    CurvatureState {
        n: data.len(),
        c: mlp.output_dim(),
        num_params: mlp.num_params(),
        noise_power: lik.noise_power(ef),
        data: data_,
    }
}

pub fn accumulate_full_ggn(
    mlp: &Mlp,
    params: &[f64],
    data: &Dataset,
    lik: &Likelihood,
) -> Result<CurvatureState> {
    check_inputs(mlp, params, data)?;
    let jac = mlp.jacobians(params, &data.x)?;
    let f = mlp.forward(params, &data.x)?;
    let lambda = (0..data.len())
        .map(|n| lik.unscaled_hessian(f.row(n)))
        .collect();
    Ok(state(
        mlp,
        data,
        lik,
        false,
        CurvatureData::FullGgn {
            j: jac.stacked(),
            lambda,
        },
    ))
}

pub fn accumulate_full_ef(
    mlp: &Mlp,
    params: &[f64],
    data: &Dataset,
    lik: &Likelihood,
) -> Result<CurvatureState> {
    check_inputs(mlp, params, data)?;
    let g = residual_rows(mlp, params, data, lik)?;
    Ok(state(mlp, data, lik, true, CurvatureData::FullEf { g }))
}

fn residual_rows(mlp: &Mlp, params: &[f64], data: &Dataset, lik: &Likelihood) -> Result<Matrix> {
    let c = mlp.output_dim();
    let mut out = Matrix::zeros(data.len(), mlp.num_params());
    let mut trace = ForwardTrace::default();
    let mut seed = Matrix::zeros(1, c);
    let mut row = Matrix::zeros(1, mlp.num_params());
    for n in 0..data.len() {
        mlp.forward_trace(params, data.x.row(n), &mut trace);
        residual_into(lik, trace.output(), data.y.get(n), seed.row_mut(0));
        if seed.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "gradient",
                index: n,
            });
        }
        row.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        mlp.backward_into(params, &trace, &seed, &mut row);
        out.row_mut(n).copy_from_slice(row.row(0));
    }
    Ok(out)
}

pub fn accumulate_diag_ef(
    mlp: &Mlp,
    params: &[f64],
    data: &Dataset,
    lik: &Likelihood,
) -> Result<CurvatureState> {
    check_inputs(mlp, params, data)?;
    let g = residual_rows(mlp, params, data, lik)?;
    let mut h = vec![0.0; mlp.num_params()];
    for n in 0..g.rows() {
        for (acc, v) in h.iter_mut().zip(g.row(n)) {
            *acc += v * v;
        }
    }
    Ok(state(mlp, data, lik, true, CurvatureData::DiagEf { h }))
}

pub fn accumulate_diag_ggn(
    mlp: &Mlp,
    params: &[f64],
    data: &Dataset,
    lik: &Likelihood,
) -> Result<CurvatureState> {
    check_inputs(mlp, params, data)?;
    let c = mlp.output_dim();
    let mut h = vec![0.0; mlp.num_params()];
    let mut trace = ForwardTrace::default();
    let mut root = Matrix::zeros(c, c);
    let mut rows = Matrix::zeros(c, mlp.num_params());
    for n in 0..data.len() {
        mlp.forward_trace(params, data.x.row(n), &mut trace);
        lambda_root_into(lik, trace.output(), &mut root);
        rows.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        mlp.backward_into(params, &trace, &root, &mut rows);
        for r in 0..c {
            for (acc, v) in h.iter_mut().zip(rows.row(r)) {
                *acc += v * v;
            }
        }
    }
    Ok(state(mlp, data, lik, false, CurvatureData::DiagGgn { h }))
}

pub fn accumulate_kfac(
    mlp: &Mlp,
    params: &[f64],
    data: &Dataset,
    lik: &Likelihood,
) -> Result<CurvatureState> {
    check_inputs(mlp, params, data)?;
    let c = mlp.output_dim();
    let shapes = mlp.layout().layers();
    let mut layers: Vec<KfacFactors> = shapes
        .iter()
        .map(|s| KfacFactors {
            a: Matrix::zeros(s.fan_in, s.fan_in),
            b: Matrix::zeros(s.fan_out, s.fan_out),
        })
        .collect();
    let mut trace = ForwardTrace::default();
    let mut root = Matrix::zeros(c, c);
    for n in 0..data.len() {
        mlp.forward_trace(params, data.x.row(n), &mut trace);
        lambda_root_into(lik, trace.output(), &mut root);
        mlp.backprop_rows(params, &trace, &root, |l, gz, input| {
            let f = &mut layers[l];
            f.b.add_scaled(&gram(gz), 1.0);
            let k = input.len();
            let a = f.a.as_mut_slice();
            for i in 0..k {
                if input[i] != 0.0 {
                    crate::linalg::axpy(input[i], input, &mut a[i * k..(i + 1) * k]);
                }
            }
        });
    }
    let inv_n = 1.0 / data.len() as f64;
    for f in &mut layers {
        f.a.scale_in_place(inv_n);
    }
    Ok(state(mlp, data, lik, false, CurvatureData::Kfac { layers }))
}

pub fn accumulate(
    kind: CurvatureKind,
    mlp: &Mlp,
    params: &[f64],
    data: &Dataset,
    lik: &Likelihood,
) -> Result<CurvatureState> {
    match kind {
        CurvatureKind::FullGgn => accumulate_full_ggn(mlp, params, data, lik),
        CurvatureKind::FullEf => accumulate_full_ef(mlp, params, data, lik),
        CurvatureKind::Kfac => accumulate_kfac(mlp, params, data, lik),
        CurvatureKind::DiagGgn => accumulate_diag_ggn(mlp, params, data, lik),
        CurvatureKind::DiagEf => accumulate_diag_ef(mlp, params, data, lik),
    }
}
