//! MAP training interleaved with marginal-likelihood hyperparameter steps.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curvature::CurvatureKind;
use crate::data::Dataset;
use crate::likelihood::HyperParams;
use crate::marglik::{self, LogDetCache, MargLikReport};
use crate::nn::{Mlp, ParamVector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam { lr: f64 },
    SgdMomentum { lr: f64, momentum: f64 },
}

impl OptimizerKind {
    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Adam { lr } | OptimizerKind::SgdMomentum { lr, .. } => lr,
        }
    }
}

/// Multiply the learning rate by `factor` every `every` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub every: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr_decay: Option<StepDecay>,
    /// Adam step size `γ` for hyperparameters.
    pub hyper_lr: f64,
    /// Hyperparameter steps `K` per estimation.
    pub hyper_steps: usize,
    /// Burn-in epochs `B`.
    pub burn_in: usize,
    /// Estimation frequency `F`.
    pub marglik_frequency: usize,
    pub curvature: CurvatureKind,
    pub seed: u64,
    /// When false, hyperparameters stay at their initial values and the
    /// marginal likelihood is only evaluated.
    pub online: bool,
    pub learn_prior: bool,
    pub learn_likelihood: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            optimizer: OptimizerKind::Adam { lr: 1e-3 },
            lr_decay: None,
            hyper_lr: 0.1,
            hyper_steps: 1,
            burn_in: 0,
            marglik_frequency: 1,
            curvature: CurvatureKind::FullGgn,
            seed: 0,
            online: true,
            learn_prior: true,
            learn_likelihood: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.epochs == 0 {
            errs.push("epochs must be >= 1".to_string());
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be >= 1".to_string());
        }
        if self.hyper_steps == 0 {
            errs.push("hyper_steps must be >= 1".to_string());
        }
        if self.marglik_frequency == 0 {
            errs.push("marglik_frequency must be >= 1".to_string());
        }
        if !(self.hyper_lr > 0.0 && self.hyper_lr.is_finite()) {
            errs.push(format!("hyper_lr must be positive, got {}", self.hyper_lr));
        }
        if !(self.optimizer.lr() >= 0.0 && self.optimizer.lr().is_finite()) {
            errs.push(format!(
                "lr must be non-negative, got {}",
                self.optimizer.lr()
            ));
        }
        if let Some(d) = self.lr_decay {
            if d.every == 0 || d.factor.is_nan() || d.factor <= 0.0 {
                errs.push("lr decay needs every >= 1 and factor > 0".to_string());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        let base = self.optimizer.lr();
        match self.lr_decay {
            Some(d) => base * d.factor.powi(((epoch - 1) / d.every) as i32),
            None => base,
        }
    }
}

/// First-order optimizer state for a flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OptimizerState {
    Adam { m: Vec<f64>, v: Vec<f64>, t: u64 },
    Sgd { velocity: Vec<f64>, momentum: f64 },
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl OptimizerState {
    pub fn new(kind: &OptimizerKind, len: usize) -> Self {
        match *kind {
            OptimizerKind::Adam { .. } => OptimizerState::adam(len),
            OptimizerKind::SgdMomentum { momentum, .. } => OptimizerState::Sgd {
                velocity: vec![0.0; len],
                momentum,
            },
        }
    }

    pub fn adam(len: usize) -> Self {
        OptimizerState::Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// One descent step on `x` along `-grad`.
    pub fn descend(&mut self, x: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            OptimizerState::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(*t as i32);
                let c2 = 1.0 - ADAM_BETA2.powi(*t as i32);
                for i in 0..x.len() {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad[i];
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
                    x[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                }
            }
            OptimizerState::Sgd { velocity, momentum } => {
                for i in 0..x.len() {
                    velocity[i] = *momentum * velocity[i] + grad[i];
                    x[i] -= lr * velocity[i];
                }
            }
        }
    }
}

/// Estimation predicate on 1-indexed epochs: `epoch > B` and `epoch mod F = 0`.
pub fn marglik_schedule(epoch: usize, burn_in: usize, frequency: usize) -> bool {
    epoch > burn_in && epoch.is_multiple_of(frequency)
}

/// One pass over shuffled minibatches. Returns the summed negative log joint
/// of the batches, with the prior scaled by each batch's share of the data.
#[allow(clippy::too_many_arguments)]
pub fn train_map_epoch(
    mlp: &Mlp,
    params: &mut [f64],
    data: &Dataset,
    hypers: &HyperParams,
    batch_size: usize,
    lr: f64,
    opt: &mut OptimizerState,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    for chunk in order.chunks(batch_size.max(1)) {
        let batch = data.subset(chunk);
        let (value, grad) = mlp.grad_log_joint(
            params,
            &batch,
            &hypers.likelihood,
            &hypers.prior,
            data.len(),
        )?;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                what: "training loss",
                index: chunk[0],
            });
        }
        total -= value;
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        opt.descend(params, &neg, lr);
    }
    if let Some(i) = params.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "parameter",
            index: i,
        });
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epoch: usize,
    pub params: Vec<f64>,
    pub hypers: HyperParams,
    pub report: MargLikReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    /// Negative log joint per example, accumulated over the epoch's batches.
    pub train_nll: f64,
    /// After the epoch's hyperparameter steps; `None` when not estimated.
    pub log_marglik: Option<f64>,
    pub log_marglik_per_n: Option<f64>,
    /// Before the hyperparameter steps.
    pub log_marglik_pre: Option<f64>,
    /// Hyperparameters at the end of the epoch (log space).
    pub hypers: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamVector,
    pub hypers: HyperParams,
    /// `log q` at the final parameters and hyperparameters.
    pub final_report: MargLikReport,
    pub best: Option<Checkpoint>,
    pub trace: Vec<TraceRow>,
}

fn hyper_mask(cfg: &TrainConfig, hypers: &HyperParams) -> Vec<bool> {
    let mut mask = vec![cfg.online && cfg.learn_prior; hypers.prior.num_slots()];
    mask.push(cfg.online && cfg.learn_likelihood);
    mask
}

/// `K` Adam ascent steps on `log q` with the curvature held fixed. Returns
/// the report after the last step.
pub fn hyper_steps(
    cache: &LogDetCache,
    mode: &marglik::ModeSummary,
    hypers: &mut HyperParams,
    steps: usize,
    lr: f64,
    mask: &[bool],
    opt: &mut OptimizerState,
) -> Result<(MargLikReport, MargLikReport)> {
    let (pre, mut grad) = marglik::evaluate(cache, mode, hypers)?;
    let mut post = pre.clone();
    if !mask.iter().any(|&m| m) {
        return Ok((pre, post));
    }
    for _ in 0..steps {
        let mut x = hypers.to_vec();
        let neg: Vec<f64> = grad
            .iter()
            .zip(mask)
            .map(|(g, &m)| if m { -g } else { 0.0 })
            .collect();
        opt.descend(&mut x, &neg, lr);
        hypers.set_from_slice(&x);
        (post, grad) = marglik::evaluate(cache, mode, hypers)?;
    }
    Ok((pre, post))
}

/// MAP epochs with scheduled hyperparameter updates and
/// best-marginal-likelihood checkpointing.
pub fn run_marglik_training(
    mlp: &Mlp,
    data: &Dataset,
    init_hypers: &HyperParams,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    run_marglik_training_from(mlp, mlp.init_params(cfg.seed), data, init_hypers, cfg)
}

pub fn run_marglik_training_from(
    mlp: &Mlp,
    init: ParamVector,
    data: &Dataset,
    init_hypers: &HyperParams,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    init_hypers.prior.check_layout(mlp.layout())?;
    let mut params = init.into_vec();
    let mut hypers = init_hypers.clone();
    let mask = hyper_mask(cfg, &hypers);
    let mut param_opt = OptimizerState::new(&cfg.optimizer, params.len());
    let mut hyper_opt = OptimizerState::adam(hypers.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best: Option<Checkpoint> = None;
    let mut last_report = None;
    let n = data.len() as f64;

    for epoch in 1..=cfg.epochs {
        let loss = train_map_epoch(
            mlp,
            &mut params,
            data,
            &hypers,
            cfg.batch_size,
            cfg.lr_at(epoch),
            &mut param_opt,
            &mut rng,
        )?;
        let mut row = TraceRow {
            epoch,
            train_nll: loss / n,
            log_marglik: None,
            log_marglik_per_n: None,
            log_marglik_pre: None,
            hypers: Vec::new(),
        };
        if marglik_schedule(epoch, cfg.burn_in, cfg.marglik_frequency) {
            let (cache, mode) =
                marglik::prepare(cfg.curvature, mlp, &params, data, &hypers, cfg.hyper_steps)?;
            let (pre, post) = hyper_steps(
                &cache,
                &mode,
                &mut hypers,
                cfg.hyper_steps,
                cfg.hyper_lr,
                &mask,
                &mut hyper_opt,
            )?;
            row.log_marglik = Some(post.log_marglik);
            row.log_marglik_per_n = Some(post.log_marglik_per_example);
            row.log_marglik_pre = Some(pre.log_marglik);
            if best
                .as_ref()
                .is_none_or(|b| post.log_marglik > b.report.log_marglik)
            {
                best = Some(Checkpoint {
                    epoch,
                    params: params.clone(),
                    hypers: hypers.clone(),
                    report: post.clone(),
                });
            }
            last_report = Some((epoch, post));
        }
        row.hypers = hypers.to_vec();
        trace.push(row);
    }

    let final_report = match last_report {
        Some((e, r)) if e == cfg.epochs => r,
        _ => marglik::log_marglik_at(cfg.curvature, mlp, &params, data, &hypers)?,
    };
    Ok(TrainOutcome {
        params: ParamVector::new(params, mlp.layout())?,
        hypers,
        final_report,
        best,
        trace,
    })
}
