//! Config-driven experiment runs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{DataConfig, ExperimentConfig, PriorStructure};
use crate::data::{gen_banana, gen_sinusoid, load_csv, read_numeric_csv, Dataset, Targets};
use crate::likelihood::HyperParams;
use crate::linalg::Matrix;
use crate::metrics::{metric_suite, MetricSuite};
use crate::nn::Mlp;
use crate::predictive::{predict_bayes, predict_map, PosteriorApprox, Predictions};
use crate::record::{emit_outputs, BestRef, RunMetrics, RunRecord};
use crate::training::run_marglik_training;
use crate::{Error, Result};

/// Number of inputs on the plotted 1-D predictive curve.
pub const CURVE_POINTS: usize = 200;

/// Training and test data plus the affine maps back to original units.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Option<Dataset>,
    pub input_mean: Vec<f64>,
    pub input_sd: Vec<f64>,
    /// Empty when targets are not standardized.
    pub target_mean: Vec<f64>,
    pub target_sd: Vec<f64>,
}

impl PreparedData {
    fn raw(train: Dataset, test: Dataset) -> Self {
        let d = train.input_dim();
        Self {
            train,
            test: Some(test),
            input_mean: vec![0.0; d],
            input_sd: vec![1.0; d],
            target_mean: Vec::new(),
            target_sd: Vec::new(),
        }
    }

    pub fn standardize_inputs(&self, x: &mut Matrix) {
        for n in 0..x.rows() {
            for (d, v) in x.row_mut(n).iter_mut().enumerate() {
                *v = (*v - self.input_mean[d]) / self.input_sd[d];
            }
        }
    }

    /// Maps regression predictions and targets back to original units.
    fn destandardize(&self, pred: &mut Predictions, y: &mut Targets) {
        if self.target_sd.is_empty() {
            return;
        }
        if let (
            Predictions::Regression {
                mean,
                epistemic_var,
                aleatoric_var,
            },
            Targets::Real(t),
        ) = (pred, y)
        {
            for m in [mean, t] {
                for n in 0..m.rows() {
                    for (c, v) in m.row_mut(n).iter_mut().enumerate() {
                        *v = *v * self.target_sd[c] + self.target_mean[c];
                    }
                }
            }
            for n in 0..epistemic_var.rows() {
                for (c, v) in epistemic_var.row_mut(n).iter_mut().enumerate() {
                    *v *= self.target_sd[c].powi(2);
                }
            }
            for (v, sd) in aleatoric_var.iter_mut().zip(&self.target_sd) {
                *v *= sd * sd;
            }
        }
    }
}

pub fn load_data(cfg: &DataConfig) -> Result<PreparedData> {
    Ok(match cfg {
        DataConfig::Sinusoid { spec, test_n } => {
            let mut test_spec = spec.clone();
            test_spec.seed = spec.seed.wrapping_add(1);
            test_spec.n = *test_n;
            PreparedData::raw(gen_sinusoid(spec), gen_sinusoid(&test_spec))
        }
        DataConfig::Banana { spec, test_n } => {
            let mut test_spec = spec.clone();
            test_spec.seed = spec.seed.wrapping_add(1);
            test_spec.n = *test_n;
            PreparedData::raw(gen_banana(spec), gen_banana(&test_spec))
        }
        DataConfig::Csv { spec } => {
            let split = load_csv(spec)?;
            PreparedData {
                test: (!split.test.is_empty()).then_some(split.test),
                train: split.train,
                input_mean: split.input_mean,
                input_sd: split.input_sd,
                target_mean: split.target_mean,
                target_sd: split.target_sd,
            }
        }
    })
}

/// The network and initial hyperparameters a config describes for `data`.
pub fn build_model(cfg: &ExperimentConfig, data: &PreparedData) -> Result<(Mlp, HyperParams)> {
    let output_dim = match &data.train.y {
        Targets::Real(m) => m.cols(),
        Targets::Class(labels) => {
            let seen = data
                .train
                .y
                .output_dim()
                .max(data.test.as_ref().map_or(0, |t| t.y.output_dim()));
            match cfg.model.classes {
                Some(c) if c < seen => {
                    return Err(Error::Config(vec![format!(
                        "[model] classes = {c} but labels go up to {}",
                        labels.iter().max().copied().unwrap_or(0)
                    )]))
                }
                Some(c) => c,
                None => seen.max(2),
            }
        }
    };
    let mlp = Mlp::new(cfg.model.network(data.train.input_dim(), output_dim))?;
    let hypers = cfg
        .model
        .init_hypers(mlp.layout(), cfg.data.is_classification());
    Ok((mlp, hypers))
}

fn suites(
    post: &PosteriorApprox,
    data: &PreparedData,
    set: &Dataset,
) -> Result<(MetricSuite, MetricSuite)> {
    let mut map = predict_map(&post.mlp, &post.params, &set.x, &post.hypers.likelihood)?;
    let mut bayes = predict_bayes(post, &set.x)?;
    let mut y = set.y.clone();
    data.destandardize(&mut map, &mut y.clone());
    data.destandardize(&mut bayes, &mut y);
    Ok((
        metric_suite(&map, &y, None)?,
        metric_suite(&bayes, &y, None)?,
    ))
}

/// MAP and linearized-Laplace metrics on the training and test sets.
pub fn evaluate_metrics(post: &PosteriorApprox, data: &PreparedData) -> Result<RunMetrics> {
    let (train_map, train_bayes) = suites(post, data, &data.train)?;
    let (test_map, test_bayes) = match &data.test {
        Some(t) => {
            let (a, b) = suites(post, data, t)?;
            (Some(a), Some(b))
        }
        None => (None, None),
    };
    Ok(RunMetrics {
        train_map,
        train_bayes,
        test_map,
        test_bayes,
    })
}

/// Trains the configured model and evaluates it. Nothing is written to disk.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let data = load_data(&cfg.data)?;
    let (mlp, hypers) = build_model(cfg, &data)?;
    let start = Instant::now();
    let out = run_marglik_training(&mlp, &data.train, &hypers, &cfg.train)?;
    let wall_clock_secs = start.elapsed().as_secs_f64();
    let post = PosteriorApprox::new(
        cfg.train.curvature,
        &mlp,
        out.params.as_slice(),
        &data.train,
        &out.hypers,
    )?
    .with_samples(cfg.predictive_samples, cfg.train.seed);
    let metrics = evaluate_metrics(&post, &data)?;
    Ok(RunRecord {
        config: cfg.clone(),
        data_fingerprint: data.train.fingerprint(),
        num_train: data.train.len(),
        num_params: mlp.num_params(),
        hyper_names: out.hypers.names(),
        trace: out.trace,
        final_marglik: out.final_report,
        final_hypers: out.hypers,
        best: out.best.map(|b| BestRef {
            epoch: b.epoch,
            log_marglik: b.report.log_marglik,
        }),
        metrics,
        params: out.params.into_vec(),
        wall_clock_secs,
    })
}

/// The config of one grid point: a single shared prior precision held at
/// `delta` while the likelihood parameter is still learned.
pub fn grid_point_config(cfg: &ExperimentConfig, delta: f64) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.name = format!("{}-delta-{:e}", cfg.name, delta);
    c.model.prior = PriorStructure::Shared;
    c.model.prior_precision = delta;
    c.train.learn_prior = false;
    c.grid = None;
    c
}

/// One record per prior precision in the `[grid]` section.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let Some(grid) = &cfg.grid else {
        return Err(Error::Config(vec![
            "grid runs need a [grid] section".to_string()
        ]));
    };
    grid.prior_precisions
        .iter()
        .map(|&d| run_experiment(&grid_point_config(cfg, d)))
        .collect()
}

/// Rebuilds the data and the Laplace posterior a record was trained with.
pub fn posterior_from_record(record: &RunRecord) -> Result<(PosteriorApprox, PreparedData)> {
    let data = load_data(&record.config.data)?;
    if data.train.fingerprint() != record.data_fingerprint {
        return Err(Error::Shape(format!(
            "training data of {} no longer matches its fingerprint",
            record.config.name
        )));
    }
    let (mlp, _) = build_model(&record.config, &data)?;
    let post = PosteriorApprox::new(
        record.config.train.curvature,
        &mlp,
        &record.params,
        &data.train,
        &record.final_hypers,
    )?
    .with_samples(record.config.predictive_samples, record.config.train.seed);
    Ok((post, data))
}

/// `x, mean, epistemic_sd, total_sd` over the training input range widened
/// by a quarter on each side. `None` unless the model is 1-D regression.
pub fn predictive_curve(
    post: &PosteriorApprox,
    data: &PreparedData,
) -> Result<Option<Vec<[f64; 4]>>> {
    if data.train.input_dim() != 1
        || post.mlp.output_dim() != 1
        || !post.hypers.likelihood.is_gaussian()
    {
        return Ok(None);
    }
    let xs: Vec<f64> = (0..data.train.len())
        .map(|n| data.train.x[(n, 0)])
        .collect();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.25 * (hi - lo).max(1e-12);
    let grid: Vec<f64> = (0..CURVE_POINTS)
        .map(|i| lo - pad + (hi - lo + 2.0 * pad) * i as f64 / (CURVE_POINTS - 1) as f64)
        .collect();
    let mut pred = predict_bayes(post, &Matrix::column(&grid))?;
    let mut dummy = Targets::Real(Matrix::zeros(grid.len(), 1));
    data.destandardize(&mut pred, &mut dummy);
    let total = pred.total_var().expect("regression");
    let Predictions::Regression {
        mean,
        epistemic_var,
        ..
    } = pred
    else {
        unreachable!("gaussian likelihood")
    };
    Ok(Some(
        grid.iter()
            .enumerate()
            .map(|(i, &x)| {
                let x = x * data.input_sd[0] + data.input_mean[0];
                [
                    x,
                    mean[(i, 0)],
                    epistemic_var[(i, 0)].sqrt(),
                    total[(i, 0)].sqrt(),
                ]
            })
            .collect(),
    ))
}

/// Writes trace, record and (for 1-D regression) predictive curve files.
pub fn write_record(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    let (post, data) = posterior_from_record(record)?;
    let curve = predictive_curve(&post, &data)?;
    emit_outputs(record, curve.as_deref(), dir)
}

/// Predictions of a recorded model on raw inputs read from `csv`.
/// Regression yields `mean_c, epistemic_sd_c, total_sd_c` per output,
/// classification `p_c` per class; input columns are echoed first.
pub fn predict_csv(record: &RunRecord, csv: &Path) -> Result<(Vec<String>, Matrix)> {
    let (post, data) = posterior_from_record(record)?;
    let (header, raw) = read_numeric_csv(csv)?;
    if raw.cols() != data.train.input_dim() {
        return Err(Error::Shape(format!(
            "{} has {} columns, the model takes {} inputs",
            csv.display(),
            raw.cols(),
            data.train.input_dim()
        )));
    }
    let mut x = raw.clone();
    data.standardize_inputs(&mut x);
    let mut pred = predict_bayes(&post, &x)?;
    let mut dummy = Targets::Real(Matrix::zeros(x.rows(), post.mlp.output_dim()));
    data.destandardize(&mut pred, &mut dummy);
    let mut cols = header;
    let blocks: Vec<Matrix> = match &pred {
        Predictions::Regression {
            mean,
            epistemic_var,
            ..
        } => {
            let c = mean.cols();
            cols.extend((0..c).map(|k| format!("mean_{k}")));
            cols.extend((0..c).map(|k| format!("epistemic_sd_{k}")));
            cols.extend((0..c).map(|k| format!("total_sd_{k}")));
            let sd = |m: &Matrix| {
                let mut m = m.clone();
                m.as_mut_slice().iter_mut().for_each(|v| *v = v.sqrt());
                m
            };
            vec![
                mean.clone(),
                sd(epistemic_var),
                sd(&pred.total_var().expect("regression")),
            ]
        }
        Predictions::Classification { probs } => {
            cols.extend((0..probs.cols()).map(|k| format!("p_{k}")));
            vec![probs.clone()]
        }
    };
    let width = raw.cols() + blocks.iter().map(Matrix::cols).sum::<usize>();
    let mut out = Matrix::zeros(raw.rows(), width);
    for n in 0..raw.rows() {
        let mut row = raw.row(n).to_vec();
        for b in &blocks {
            row.extend_from_slice(b.row(n));
        }
        out.row_mut(n).copy_from_slice(&row);
    }
    Ok((cols, out))
}

#[cfg(test)]
#[allow(clippy::field_reassign_with_default)]
mod tests {
    use super::*;
    use crate::data::SinusoidSpec;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.data = DataConfig::Sinusoid {
            spec: SinusoidSpec {
                n: 30,
                ..Default::default()
            },
            test_n: 20,
        };
        cfg.model.hidden = vec![8];
        cfg.train.epochs = 6;
        cfg.train.batch_size = 10;
        cfg.train.optimizer = crate::training::OptimizerKind::Adam { lr: 1e-2 };
        cfg
    }

    #[test]
    fn run_is_deterministic() {
        let cfg = small();
        let a = run_experiment(&cfg).unwrap();
        let mut b = run_experiment(&cfg).unwrap();
        b.wall_clock_secs = a.wall_clock_secs;
        assert_eq!(a, b);
        assert_eq!(a.trace.len(), 6);
        assert_eq!(a.num_params, 2 * 8 + 8 + 1);
        assert!(a.metrics.test_bayes.as_ref().unwrap().rmse.is_some());
    }

    #[test]
    fn grid_gives_one_record_per_point() {
        let mut cfg = small();
        cfg.train.epochs = 2;
        cfg.grid = Some(crate::config::GridConfig {
            prior_precisions: vec![0.1, 1.0, 10.0],
        });
        let recs = run_grid(&cfg).unwrap();
        assert_eq!(recs.len(), 3);
        for (r, d) in recs.iter().zip([0.1, 1.0, 10.0]) {
            assert!(r.final_hypers.prior.is_shared());
            assert!((r.final_hypers.prior.log_delta[0] - f64::ln(d)).abs() < 1e-15);
            assert_ne!(
                r.final_hypers.likelihood,
                crate::likelihood::Likelihood::gaussian(1.0)
            );
        }
    }

    #[test]
    fn curve_exists_for_sinusoid_only() {
        let cfg = small();
        let rec = run_experiment(&cfg).unwrap();
        let (post, data) = posterior_from_record(&rec).unwrap();
        let curve = predictive_curve(&post, &data).unwrap().unwrap();
        assert_eq!(curve.len(), CURVE_POINTS);
        assert!(curve.iter().all(|r| r[3] >= r[2] && r[2] >= 0.0));

        let mut c = small();
        c.data = DataConfig::Banana {
            spec: crate::data::BananaSpec {
                n: 20,
                ..Default::default()
            },
            test_n: 10,
        };
        let rec = run_experiment(&c).unwrap();
        let (post, data) = posterior_from_record(&rec).unwrap();
        assert!(predictive_curve(&post, &data).unwrap().is_none());
        assert!(rec.metrics.train_bayes.accuracy.is_some());
    }
}
