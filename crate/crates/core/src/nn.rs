//! Fully-connected networks with explicit backpropagation.
//!
//! Parameters live in one flat vector. Each layer owns two consecutive
//! groups: the weight matrix (row-major, `fan_out x fan_in`) followed by the
//! bias vector. The output layer is linear.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::likelihood::{Likelihood, PriorPrecisions};
use crate::linalg::{axpy, dot, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative given the pre-activation `z` and activation `a = φ(z)`.
    /// The relu kink at exactly zero gets derivative 0.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!(
                "unknown activation `{other}` (expected relu or tanh)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    /// One activation per hidden layer.
    pub activations: Vec<Activation>,
}

impl NetworkSpec {
    /// Uniform activation across all hidden layers.
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize, act: Activation) -> Self {
        let activations = vec![act; hidden.len()];
        Self {
            input_dim,
            hidden,
            output_dim,
            activations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(vec![format!(
                "all layer widths must be >= 1, got {} -> {:?} -> {}",
                self.input_dim, self.hidden, self.output_dim
            )]));
        }
        if self.activations.len() != self.hidden.len() {
            return Err(Error::Config(vec![format!(
                "{} activations for {} hidden layers",
                self.activations.len(),
                self.hidden.len()
            )]));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub layer: usize,
    pub kind: GroupKind,
    pub offset: usize,
    pub len: usize,
}

impl ParamGroup {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
    /// `None` for the output layer.
    pub activation: Option<Activation>,
}

impl LayerShape {
    pub fn weight_range(&self) -> Range<usize> {
        self.weight_offset..self.weight_offset + self.fan_in * self.fan_out
    }

    pub fn bias_range(&self) -> Range<usize> {
        self.bias_offset..self.bias_offset + self.fan_out
    }

    pub fn weight_group(&self, layer: usize) -> usize {
        2 * layer
    }

    pub fn bias_group(&self, layer: usize) -> usize {
        2 * layer + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    layers: Vec<LayerShape>,
    groups: Vec<ParamGroup>,
    total: usize,
}

impl ParamLayout {
    pub fn from_spec(spec: &NetworkSpec) -> Self {
        let mut widths = vec![spec.input_dim];
        widths.extend(&spec.hidden);
        widths.push(spec.output_dim);
        let mut layers = Vec::new();
        let mut groups = Vec::new();
        let mut offset = 0;
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let weight_offset = offset;
            groups.push(ParamGroup {
                layer: l,
                kind: GroupKind::Weight,
                offset,
                len: fan_in * fan_out,
            });
            offset += fan_in * fan_out;
            let bias_offset = offset;
            groups.push(ParamGroup {
                layer: l,
                kind: GroupKind::Bias,
                offset,
                len: fan_out,
            });
            offset += fan_out;
            layers.push(LayerShape {
                fan_in,
                fan_out,
                weight_offset,
                bias_offset,
                activation: spec.activations.get(l).copied(),
            });
        }
        Self {
            layers,
            groups,
            total: offset,
        }
    }

    pub fn num_params(&self) -> usize {
        self.total
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.len).collect()
    }

    /// Group index of every parameter.
    pub fn group_of_param(&self) -> Vec<usize> {
        let mut out = vec![0; self.total];
        for (g, grp) in self.groups.iter().enumerate() {
            out[grp.range()].iter_mut().for_each(|v| *v = g);
        }
        out
    }

    pub fn group_sq_norms(&self, params: &[f64]) -> Vec<f64> {
        self.groups
            .iter()
            .map(|g| params[g.range()].iter().map(|v| v * v).sum())
            .collect()
    }
}

/// Flat parameter storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: &ParamLayout) -> Result<Self> {
        if values.len() != layout.num_params() {
            return Err(Error::Shape(format!(
                "parameter vector of length {} for layout with {} parameters",
                values.len(),
                layout.num_params()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "parameter",
                index: i,
            });
        }
        Ok(Self { values })
    }

    pub fn zeros(layout: &ParamLayout) -> Self {
        Self {
            values: vec![0.0; layout.num_params()],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

/// Per-example Jacobians `J_θ(x_n)`, each `C x P`.
#[derive(Debug, Clone)]
pub struct JacobianBatch {
    pub per_example: Vec<Matrix>,
}

impl JacobianBatch {
    pub fn len(&self) -> usize {
        self.per_example.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_example.is_empty()
    }

    /// The `NC x P` stacked Jacobian.
    pub fn stacked(&self) -> Matrix {
        Matrix::vstack(&self.per_example).expect("jacobians share a width")
    }
}

/// Activations recorded on the forward pass of a single example.
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace {
    /// Input to each layer; `inputs[0]` is the example itself.
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activations of each layer; the last one is the network output.
    pub pre: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.pre.last().expect("network has at least one layer")
    }
}

/// A network architecture bound to its parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: NetworkSpec,
    layout: ParamLayout,
}

impl Mlp {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let layout = ParamLayout::from_spec(&spec);
        Ok(Self { spec, layout })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.layout.num_params()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    /// Uniform Glorot/He-style initialization with zero biases.
    ///
    /// Relu layers use `a = sqrt(6 / fan_in)`, tanh and the linear output
    /// layer use `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; self.num_params()];
        for layer in self.layout.layers() {
            let bound = match layer.activation {
                Some(Activation::Relu) => (6.0 / layer.fan_in as f64).sqrt(),
                _ => (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt(),
            };
            for v in &mut values[layer.weight_range()] {
                *v = rng.random_range(-bound..bound);
            }
        }
        ParamVector { values }
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        Ok(())
    }

    /// Forward pass of one example, recording what backprop needs.
    pub fn forward_trace(&self, params: &[f64], x: &[f64], trace: &mut ForwardTrace) {
        let layers = self.layout.layers();
        trace.inputs.resize(layers.len(), Vec::new());
        trace.pre.resize(layers.len(), Vec::new());
        trace.inputs[0].clear();
        trace.inputs[0].extend_from_slice(x);
        for (l, layer) in layers.iter().enumerate() {
            let w = &params[layer.weight_range()];
            let b = &params[layer.bias_range()];
            let (head, tail) = trace.inputs.split_at_mut(l + 1);
            let input = &head[l];
            let z = &mut trace.pre[l];
            z.clear();
            z.extend(
                (0..layer.fan_out)
                    .map(|i| dot(&w[i * layer.fan_in..(i + 1) * layer.fan_in], input) + b[i]),
            );
            if let Some(act) = layer.activation {
                let next = &mut tail[0];
                next.clear();
                next.extend(z.iter().map(|&v| act.apply(v)));
            }
        }
    }

    /// Network outputs for every row of `x`.
    pub fn forward(&self, params: &[f64], x: &Matrix) -> Result<Matrix> {
        self.check_params(params)?;
        if x.cols() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.spec.input_dim
            )));
        }
        let mut out = Matrix::zeros(x.rows(), self.spec.output_dim);
        let mut trace = ForwardTrace::default();
        for n in 0..x.rows() {
            self.forward_trace(params, x.row(n), &mut trace);
            out.row_mut(n).copy_from_slice(trace.output());
        }
        Ok(out)
    }

    /// Backpropagates `K` output-space row vectors (the rows of `seed`,
    /// each of length `C`). For every layer, from the output down, `visit`
    /// receives the layer index, the `K x fan_out` sensitivities with respect
    /// to the layer's pre-activations, and the layer input.
    pub fn backprop_rows<F>(
        &self,
        params: &[f64],
        trace: &ForwardTrace,
        seed: &Matrix,
        mut visit: F,
    ) where
        F: FnMut(usize, &Matrix, &[f64]),
    {
        let layers = self.layout.layers();
        let k = seed.rows();
        let mut gz = seed.clone();
        for l in (0..layers.len()).rev() {
            visit(l, &gz, &trace.inputs[l]);
            if l == 0 {
                break;
            }
            let layer = &layers[l];
            let prev = &layers[l - 1];
            let act = prev.activation.expect("hidden layers have activations");
            let w = &params[layer.weight_range()];
            let mut next = Matrix::zeros(k, layer.fan_in);
            for r in 0..k {
                let out = next.row_mut(r);
                for (i, &g) in gz.row(r).iter().enumerate() {
                    if g != 0.0 {
                        axpy(g, &w[i * layer.fan_in..(i + 1) * layer.fan_in], out);
                    }
                }
                let z = &trace.pre[l - 1];
                let a = &trace.inputs[l];
                for (j, o) in out.iter_mut().enumerate() {
                    *o *= act.derivative(z[j], a[j]);
                }
            }
            gz = next;
        }
    }

    /// Accumulates `seedᵀ`-weighted parameter gradients into the rows of
    /// `out` (`K x P`): row `r` receives `J_θ(x)ᵀ seed_r`.
    pub fn backward_into(
        &self,
        params: &[f64],
        trace: &ForwardTrace,
        seed: &Matrix,
        out: &mut Matrix,
    ) {
        let layers = self.layout.layers();
        self.backprop_rows(params, trace, seed, |l, gz, input| {
            let layer = &layers[l];
            for r in 0..gz.rows() {
                let row = out.row_mut(r);
                let (wr, br) = (layer.weight_range(), layer.bias_range());
                for (i, &g) in gz.row(r).iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    let start = wr.start + i * layer.fan_in;
                    axpy(g, input, &mut row[start..start + layer.fan_in]);
                    row[br.start + i] += g;
                }
            }
        });
    }

    /// Jacobian `J_θ(x)` (`C x P`) of one example.
    pub fn jacobian_one(&self, params: &[f64], trace: &ForwardTrace) -> Matrix {
        let c = self.spec.output_dim;
        let mut j = Matrix::zeros(c, self.num_params());
        self.backward_into(params, trace, &Matrix::identity(c), &mut j);
        j
    }

    pub fn jacobians(&self, params: &[f64], x: &Matrix) -> Result<JacobianBatch> {
        self.check_params(params)?;
        let mut trace = ForwardTrace::default();
        let per_example = (0..x.rows())
            .map(|n| {
                self.forward_trace(params, x.row(n), &mut trace);
                self.jacobian_one(params, &trace)
            })
            .collect();
        Ok(JacobianBatch { per_example })
    }

    /// Rows `∇_θ log p(y_n | f(x_n, θ))`, an `N x P` matrix.
    pub fn per_example_gradients(
        &self,
        params: &[f64],
        data: &Dataset,
        lik: &Likelihood,
    ) -> Result<Matrix> {
        self.check_params(params)?;
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        let c = self.spec.output_dim;
        let mut out = Matrix::zeros(data.len(), self.num_params());
        let mut trace = ForwardTrace::default();
        let mut seed = Matrix::zeros(1, c);
        let mut row = Matrix::zeros(1, self.num_params());
        for n in 0..data.len() {
            self.forward_trace(params, data.x.row(n), &mut trace);
            let y = data.y.get(n);
            check_finite_loss(lik.log_lik_row(trace.output(), y), n)?;
            lik.grad_wrt_f(trace.output(), y, seed.row_mut(0));
            row.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
            self.backward_into(params, &trace, &seed, &mut row);
            out.row_mut(n).copy_from_slice(row.row(0));
        }
        Ok(out)
    }

    /// Log joint of a minibatch and its gradient:
    /// `Σ_{n∈batch} log p(y_n | f(x_n)) + (|batch| / n_total) log p(θ)`.
    pub fn grad_log_joint(
        &self,
        params: &[f64],
        batch: &Dataset,
        lik: &Likelihood,
        prior: &PriorPrecisions,
        n_total: usize,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_params(params)?;
        if batch.is_empty() {
            return Err(Error::EmptyData);
        }
        let c = self.spec.output_dim;
        let mut grad = Matrix::zeros(1, self.num_params());
        let mut trace = ForwardTrace::default();
        let mut seed = Matrix::zeros(1, c);
        let mut value = 0.0;
        for n in 0..batch.len() {
            self.forward_trace(params, batch.x.row(n), &mut trace);
            let y = batch.y.get(n);
            value += check_finite_loss(lik.log_lik_row(trace.output(), y), n)?;
            lik.grad_wrt_f(trace.output(), y, seed.row_mut(0));
            self.backward_into(params, &trace, &seed, &mut grad);
        }
        let frac = batch.len() as f64 / n_total as f64;
        let mut grad = grad.into_vec();
        let log_prior = crate::likelihood::log_prior(params, &self.layout, prior);
        for (g, grp) in self.layout.groups().iter().enumerate() {
            let d = prior.group_delta(g);
            for i in grp.range() {
                grad[i] -= frac * d * params[i];
            }
        }
        Ok((value + frac * log_prior, grad))
    }
}

fn check_finite_loss(v: f64, index: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            what: "log-likelihood",
            index,
        })
    }
}
