//! Evaluation metrics for predictive distributions.

use serde::{Deserialize, Serialize};

use crate::data::Targets;
use crate::linalg::Matrix;
use crate::predictive::Predictions;
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Default number of equal-width confidence bins for calibration error.
pub const ECE_BINS: usize = 15;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSuite {
    pub rmse: Option<f64>,
    /// Mean predictive log-likelihood per example.
    pub test_loglik: Option<f64>,
    pub accuracy: Option<f64>,
    pub ece: Option<f64>,
    pub ood_auc: Option<f64>,
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a == 0 || b == 0 {
        return Err(Error::EmptyData);
    }
    if a != b {
        return Err(Error::Shape(format!("{a} predictions for {b} targets")));
    }
    Ok(())
}

pub fn rmse(mean: &Matrix, y: &Matrix) -> Result<f64> {
    check_len(mean.rows(), y.rows())?;
    let n = mean.as_slice().len() as f64;
    let sse: f64 = mean
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok((sse / n).sqrt())
}

/// Mean of `log N(y; mean, var)` over examples, summed over outputs.
pub fn gaussian_loglik(mean: &Matrix, var: &Matrix, y: &Matrix) -> Result<f64> {
    check_len(mean.rows(), y.rows())?;
    let total: f64 = mean
        .as_slice()
        .iter()
        .zip(var.as_slice())
        .zip(y.as_slice())
        .map(|((m, v), t)| -0.5 * (LN_2PI + v.ln() + (t - m).powi(2) / v))
        .sum();
    Ok(total / mean.rows() as f64)
}

/// Mean of `log p(y_n)` under predicted class probabilities.
pub fn categorical_loglik(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    check_len(probs.rows(), labels.len())?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(n, &y)| probs[(n, y)].max(f64::MIN_POSITIVE).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

pub fn accuracy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    check_len(probs.rows(), labels.len())?;
    let hits = labels
        .iter()
        .enumerate()
        .filter(|(n, &y)| argmax(probs.row(*n)) == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Maximum class probability of every row.
pub fn confidences(probs: &Matrix) -> Vec<f64> {
    (0..probs.rows())
        .map(|n| probs.row(n)[argmax(probs.row(n))])
        .collect()
}

/// Expected calibration error over `bins` equal-width confidence bins:
/// `Σ_b (|b|/N) |acc(b) − conf(b)|`.
pub fn ece(probs: &Matrix, labels: &[usize], bins: usize) -> Result<f64> {
    check_len(probs.rows(), labels.len())?;
    if bins == 0 {
        return Err(Error::Config(vec!["ece needs at least one bin".into()]));
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut hit_sum = vec![0.0; bins];
    for (n, &y) in labels.iter().enumerate() {
        let row = probs.row(n);
        let k = argmax(row);
        let conf = row[k];
        let b = ((conf * bins as f64).ceil() as usize).clamp(1, bins) - 1;
        count[b] += 1;
        conf_sum[b] += conf;
        hit_sum[b] += if k == y { 1.0 } else { 0.0 };
    }
    let n = labels.len() as f64;
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| (hit_sum[b] - conf_sum[b]).abs() / n)
        .sum())
}

/// Probability that an in-distribution score exceeds an out-of-distribution
/// one (Mann-Whitney U / (n_in n_out)), ties counted as one half.
pub fn ood_auc(in_scores: &[f64], out_scores: &[f64]) -> Result<f64> {
    if in_scores.is_empty() || out_scores.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut all: Vec<(f64, bool)> = in_scores
        .iter()
        .map(|&s| (s, true))
        .chain(out_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum_in = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_in += all[i..=j].iter().filter(|e| e.1).count() as f64 * avg_rank;
        i = j + 1;
    }
    let (n_in, n_out) = (in_scores.len() as f64, out_scores.len() as f64);
    Ok((rank_sum_in - n_in * (n_in + 1.0) / 2.0) / (n_in * n_out))
}

/// Every metric that applies to `pred` and `targets`. `ood` supplies
/// predictions on out-of-distribution inputs for the AUC.
pub fn metric_suite(
    pred: &Predictions,
    targets: &Targets,
    ood: Option<&Predictions>,
) -> Result<MetricSuite> {
    let mut out = MetricSuite::default();
    match (pred, targets) {
        (Predictions::Regression { mean, .. }, Targets::Real(y)) => {
            out.rmse = Some(rmse(mean, y)?);
            out.test_loglik = Some(gaussian_loglik(
                mean,
                &pred.total_var().expect("regression"),
                y,
            )?);
        }
        (Predictions::Classification { probs }, Targets::Class(labels)) => {
            out.accuracy = Some(accuracy(probs, labels)?);
            out.test_loglik = Some(categorical_loglik(probs, labels)?);
            out.ece = Some(ece(probs, labels, ECE_BINS)?);
            if let Some(Predictions::Classification { probs: ood_probs }) = ood {
                out.ood_auc = Some(ood_auc(&confidences(probs), &confidences(ood_probs))?);
            }
        }
        _ => return Err(Error::Shape("predictions do not match target type".into())),
    }
    Ok(out)
}
