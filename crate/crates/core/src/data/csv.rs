use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Targets};
use crate::linalg::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

/// A numeric CSV file with a header row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSpec {
    pub path: PathBuf,
    /// Zero-based target columns; every column that is neither a target
    /// nor ignored is an input. Classification uses exactly one column of
    /// non-negative integer labels.
    pub target_columns: Vec<usize>,
    #[serde(default)]
    pub ignore_columns: Vec<usize>,
    pub task: Task,
    pub standardize: bool,
    pub train_fraction: f64,
    pub split_seed: u64,
}

/// Train/test split with the statistics used to standardize it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: Dataset,
    pub test: Dataset,
    pub input_mean: Vec<f64>,
    pub input_sd: Vec<f64>,
    /// Empty for classification or when standardization is off.
    pub target_mean: Vec<f64>,
    pub target_sd: Vec<f64>,
}

impl SplitDataset {
    /// Converts a Gaussian log-likelihood of `n` standardized examples to
    /// original target units.
    pub fn destandardize_loglik(&self, loglik: f64, n: usize) -> f64 {
        loglik - n as f64 * self.target_sd.iter().map(|s| s.ln()).sum::<f64>()
    }

    /// Maps standardized regression outputs back to original units.
    pub fn destandardize_targets(&self, f: &mut Matrix) {
        if self.target_sd.is_empty() {
            return;
        }
        for n in 0..f.rows() {
            for (c, v) in f.row_mut(n).iter_mut().enumerate() {
                *v = *v * self.target_sd[c] + self.target_mean[c];
            }
        }
    }
}

fn parse_err(path: &Path, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message,
    }
}

/// Reads the header and numeric body of a CSV file.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let header: Vec<String> = match lines.next() {
        Some((_, h)) => h.split(',').map(|s| s.trim().to_string()).collect(),
        None => return Err(parse_err(path, "file is empty".into())),
    };
    let cols = header.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (lineno, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols {
            return Err(parse_err(
                path,
                format!(
                    "row {} has {} cells, header has {cols}",
                    lineno + 1,
                    cells.len()
                ),
            ));
        }
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(
                    path,
                    format!(
                        "non-numeric cell `{}` at row {}, column {}",
                        cell.trim(),
                        lineno + 1,
                        c + 1
                    ),
                )
            })?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err(path, "no data rows".into()));
    }
    Ok((header, Matrix::from_vec(rows, cols, data)?))
}

fn column_stats(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows() as f64;
    let mut mean = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (acc, v) in mean.iter_mut().zip(m.row(r)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut sd = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            sd[c] += (v - mean[c]).powi(2);
        }
    }
    for s in &mut sd {
        *s = (*s / n).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    (mean, sd)
}

fn apply_stats(m: &mut Matrix, mean: &[f64], sd: &[f64]) {
    for r in 0..m.rows() {
        for (c, v) in m.row_mut(r).iter_mut().enumerate() {
            *v = (*v - mean[c]) / sd[c];
        }
    }
}

pub fn load_csv(spec: &CsvSpec) -> Result<SplitDataset> {
    let path = spec.path.as_path();
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(vec![format!(
            "train fraction {} outside (0, 1)",
            spec.train_fraction
        )]));
    }
    let (_, raw) = read_numeric_csv(path)?;
    let cols = raw.cols();
    if spec.target_columns.is_empty() {
        return Err(parse_err(path, "no target column given".into()));
    }
    if let Some(&bad) = spec.target_columns.iter().find(|&&c| c >= cols) {
        return Err(parse_err(
            path,
            format!("target column {bad} out of range for {cols} columns"),
        ));
    }
    if let Some(&bad) = spec.ignore_columns.iter().find(|&&c| c >= cols) {
        return Err(parse_err(
            path,
            format!("ignored column {bad} out of range for {cols} columns"),
        ));
    }
    if spec.task == Task::Classification && spec.target_columns.len() != 1 {
        return Err(parse_err(
            path,
            "classification needs exactly one target column".into(),
        ));
    }
    let inputs: Vec<usize> = (0..cols)
        .filter(|c| !spec.target_columns.contains(c) && !spec.ignore_columns.contains(c))
        .collect();
    if inputs.is_empty() {
        return Err(parse_err(path, "no input columns left".into()));
    }
    let n = raw.rows();
    let pick = |rows: &[usize], cs: &[usize]| {
        let mut m = Matrix::zeros(rows.len(), cs.len());
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cs.iter().enumerate() {
                m[(i, j)] = raw[(r, c)];
            }
        }
        m
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.split_seed));
    let n_train = ((n as f64 * spec.train_fraction).round() as usize).clamp(1, n - 1);
    let (train_idx, test_idx) = order.split_at(n_train);

    let mut x_train = pick(train_idx, &inputs);
    let mut x_test = pick(test_idx, &inputs);
    let (mut input_mean, mut input_sd) = (vec![0.0; inputs.len()], vec![1.0; inputs.len()]);
    if spec.standardize {
        (input_mean, input_sd) = column_stats(&x_train);
        apply_stats(&mut x_train, &input_mean, &input_sd);
        apply_stats(&mut x_test, &input_mean, &input_sd);
    }

    let (mut target_mean, mut target_sd) = (Vec::new(), Vec::new());
    let (y_train, y_test) = match spec.task {
        Task::Regression => {
            let mut yt = pick(train_idx, &spec.target_columns);
            let mut ye = pick(test_idx, &spec.target_columns);
            if spec.standardize {
                (target_mean, target_sd) = column_stats(&yt);
                apply_stats(&mut yt, &target_mean, &target_sd);
                apply_stats(&mut ye, &target_mean, &target_sd);
            }
            (Targets::Real(yt), Targets::Real(ye))
        }
        Task::Classification => {
            let c = spec.target_columns[0];
            let label = |r: usize| -> Result<usize> {
                let v = raw[(r, c)];
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(parse_err(
                        path,
                        format!(
                            "label {v} at data row {} is not a non-negative integer",
                            r + 1
                        ),
                    ))
                }
            };
            let yt = train_idx
                .iter()
                .map(|&r| label(r))
                .collect::<Result<Vec<_>>>()?;
            let ye = test_idx
                .iter()
                .map(|&r| label(r))
                .collect::<Result<Vec<_>>>()?;
            (Targets::Class(yt), Targets::Class(ye))
        }
    };
    Ok(SplitDataset {
        train: Dataset::new(x_train, y_train)?,
        test: Dataset::new(x_test, y_test)?,
        input_mean,
        input_sd,
        target_mean,
        target_sd,
    })
}

/// Writes a matrix with a header using round-trip float formatting.
pub fn write_csv(path: &Path, header: &[&str], m: &Matrix) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
