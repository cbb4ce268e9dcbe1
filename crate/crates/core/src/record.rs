//! Run records, their on-disk forms and post-training model comparison.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::likelihood::HyperParams;
use crate::marglik::MargLikReport;
use crate::metrics::MetricSuite;
use crate::training::TraceRow;
use crate::{Error, Result};

/// Epoch and value of the highest log marginal likelihood seen in training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRef {
    pub epoch: usize,
    pub log_marglik: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub train_map: MetricSuite,
    pub train_bayes: MetricSuite,
    pub test_map: Option<MetricSuite>,
    pub test_bayes: Option<MetricSuite>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub data_fingerprint: String,
    pub num_train: usize,
    pub num_params: usize,
    pub hyper_names: Vec<String>,
    pub trace: Vec<TraceRow>,
    pub final_marglik: MargLikReport,
    pub final_hypers: HyperParams,
    pub best: Option<BestRef>,
    pub metrics: RunMetrics,
    /// Final network parameters, kept so predictions can be recomputed.
    pub params: Vec<f64>,
    pub wall_clock_secs: f64,
}

impl RunRecord {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            name: self.config.name.clone(),
            log_marglik: self.final_marglik.log_marglik,
            num_examples: self.num_train,
            num_params: self.num_params,
            fingerprint: self.data_fingerprint.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// What model comparison needs to know about a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub log_marglik: f64,
    pub num_examples: usize,
    pub num_params: usize,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    /// Indices into the input, best model first.
    pub order: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Sorts by total log marginal likelihood, highest first; equal values
/// prefer fewer parameters.
pub fn compare_summaries(runs: &[RunSummary]) -> Result<Ranking> {
    if runs.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut warnings = Vec::new();
    let reference = &runs[0].fingerprint;
    for r in &runs[1..] {
        if &r.fingerprint != reference {
            warnings.push(format!(
                "{} was trained on different data than {}; marginal likelihoods are not comparable",
                r.name, runs[0].name
            ));
        }
    }
    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by(|&a, &b| {
        runs[b]
            .log_marglik
            .total_cmp(&runs[a].log_marglik)
            .then(runs[a].num_params.cmp(&runs[b].num_params))
    });
    Ok(Ranking { order, warnings })
}

pub fn compare_runs(records: &[RunRecord]) -> Result<Ranking> {
    compare_summaries(&records.iter().map(RunRecord::summary).collect::<Vec<_>>())
}

/// Formats with 9 significant digits, switching to scientific notation for
/// very large or small magnitudes.
pub fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-4..9).contains(&exp) {
        return format!("{v:.8e}");
    }
    let decimals = (8 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn trace_csv(record: &RunRecord) -> String {
    let mut out = String::from("epoch,train_nll,log_marglik,log_marglik_per_n");
    for name in &record.hyper_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    for row in &record.trace {
        let _ = write!(
            out,
            "{},{},{},{}",
            row.epoch,
            fmt_num(row.train_nll),
            opt(row.log_marglik),
            opt(row.log_marglik_per_n)
        );
        for i in 0..record.hyper_names.len() {
            out.push(',');
            out.push_str(&opt(row.hypers.get(i).copied()));
        }
        out.push('\n');
    }
    out
}

/// Rows of `x, mean, epistemic_sd, total_sd` for 1-D regression curves.
pub fn predictive_csv(rows: &[[f64; 4]]) -> String {
    let mut out = String::from("x,mean,epistemic_sd,total_sd\n");
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| fmt_num(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `<name>.trace.csv`, `<name>.record.json` and, when given,
/// `<name>.predictive.csv` into `dir`. Returns the written paths.
pub fn emit_outputs(
    record: &RunRecord,
    curve: Option<&[[f64; 4]]>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = &record.config.name;
    let mut written = vec![
        write(dir.join(format!("{name}.trace.csv")), &trace_csv(record))?,
        write(dir.join(format!("{name}.record.json")), &record.to_json()?)?,
    ];
    if let Some(rows) = curve {
        written.push(write(
            dir.join(format!("{name}.predictive.csv")),
            &predictive_csv(rows),
        )?);
    }
    Ok(written)
}
