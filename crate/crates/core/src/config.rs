//! Experiment configuration.
//!
//! The file format is flat `key = value` text grouped under `[data]`,
//! `[model]`, `[train]`, `[curvature]` and `[grid]` headers. `#` starts a
//! comment. Every unknown section or key, malformed value and inconsistent
//! setting is collected and reported together.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{BananaSpec, CsvSpec, SinusoidSpec, Task};
use crate::likelihood::{HyperParams, Likelihood, PriorPrecisions};
use crate::nn::{Activation, NetworkSpec, ParamLayout};
use crate::predictive::DEFAULT_SAMPLES;
use crate::training::{OptimizerKind, StepDecay, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataConfig {
    /// Test points come from the same generator with the next seed.
    Sinusoid {
        spec: SinusoidSpec,
        test_n: usize,
    },
    Banana {
        spec: BananaSpec,
        test_n: usize,
    },
    Csv {
        spec: CsvSpec,
    },
}

impl DataConfig {
    pub fn is_classification(&self) -> bool {
        match self {
            DataConfig::Sinusoid { .. } => false,
            DataConfig::Banana { .. } => true,
            DataConfig::Csv { spec } => spec.task == Task::Classification,
        }
    }

    /// Replace every data seed with `seed`.
    pub fn reseed(&mut self, seed: u64) {
        match self {
            DataConfig::Sinusoid { spec, .. } => spec.seed = seed,
            DataConfig::Banana { spec, .. } => spec.seed = seed,
            DataConfig::Csv { spec } => spec.split_seed = seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorStructure {
    /// One precision per weight matrix and per bias vector.
    PerGroup,
    /// One precision for every parameter.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub prior: PriorStructure,
    /// Initial prior precision `δ`.
    pub prior_precision: f64,
    /// Initial `σ²` (regression) or `T` (classification).
    pub likelihood_param: f64,
    /// Number of classes; inferred from the labels when absent.
    pub classes: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![50],
            activation: Activation::Tanh,
            prior: PriorStructure::PerGroup,
            prior_precision: 1.0,
            likelihood_param: 1.0,
            classes: None,
        }
    }
}

impl ModelConfig {
    pub fn network(&self, input_dim: usize, output_dim: usize) -> NetworkSpec {
        NetworkSpec::new(input_dim, self.hidden.clone(), output_dim, self.activation)
    }

    pub fn init_hypers(&self, layout: &ParamLayout, classification: bool) -> HyperParams {
        let prior = match self.prior {
            PriorStructure::PerGroup => PriorPrecisions::per_group(layout, self.prior_precision),
            PriorStructure::Shared => PriorPrecisions::shared(layout, self.prior_precision),
        };
        let lik = if classification {
            Likelihood::categorical(self.likelihood_param)
        } else {
            Likelihood::gaussian(self.likelihood_param)
        };
        HyperParams::new(prior, lik)
    }
}

/// Fixed shared prior precisions swept by `grid` runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub prior_precisions: Vec<f64>,
}

impl GridConfig {
    /// `points` log-spaced values from `lo` to `hi` inclusive.
    pub fn log_spaced(lo: f64, hi: f64, points: usize) -> Self {
        let (a, b) = (lo.ln(), hi.ln());
        let prior_precisions = match points {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..points)
                .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
                .collect(),
        };
        Self { prior_precisions }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub predictive_samples: usize,
    pub grid: Option<GridConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "run".to_string(),
            data: DataConfig::Sinusoid {
                spec: SinusoidSpec::default(),
                test_n: 150,
            },
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            predictive_samples: DEFAULT_SAMPLES,
            grid: None,
        }
    }
}

const SECTIONS: [&str; 5] = ["data", "model", "train", "curvature", "grid"];

type Entries = BTreeMap<(String, String), (usize, String)>;

struct Reader<'a> {
    entries: &'a mut Entries,
    errors: Vec<String>,
}

impl Reader<'_> {
    fn raw(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        self.entries.remove(&(section.to_string(), key.to_string()))
    }

    fn get<T: FromStr>(&mut self, section: &str, key: &str) -> Option<T>
    where
        T::Err: std::fmt::Display,
    {
        let (line, value) = self.raw(section, key)?;
        match value.parse() {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors
                    .push(format!("line {line}: [{section}] {key} = {value:?}: {e}"));
                None
            }
        }
    }

    fn set<T: FromStr>(&mut self, section: &str, key: &str, slot: &mut T)
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.get(section, key) {
            *slot = v;
        }
    }

    fn bool(&mut self, section: &str, key: &str, slot: &mut bool) {
        let Some((line, value)) = self.raw(section, key) else {
            return;
        };
        match value.as_str() {
            "true" | "yes" | "1" => *slot = true,
            "false" | "no" | "0" => *slot = false,
            _ => self.errors.push(format!(
                "line {line}: [{section}] {key} = {value:?}: expected true or false"
            )),
        }
    }

    fn list<T: FromStr>(&mut self, section: &str, key: &str) -> Option<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let (line, value) = self.raw(section, key)?;
        let mut out = Vec::new();
        for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.parse() {
                Ok(v) => out.push(v),
                Err(e) => {
                    self.errors.push(format!(
                        "line {line}: [{section}] {key}: item {item:?}: {e}"
                    ));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn pair(&mut self, section: &str, key: &str, slot: &mut (f64, f64)) {
        if let Some(v) = self.list::<f64>(section, key) {
            if v.len() == 2 {
                *slot = (v[0], v[1]);
            } else {
                self.errors.push(format!(
                    "[{section}] {key} needs two comma-separated numbers"
                ));
            }
        }
    }
}

fn parse_entries(text: &str) -> (Entries, Vec<String>) {
    let mut entries = Entries::new();
    let mut errors = Vec::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            if SECTIONS.contains(&name) {
                section = Some(name.to_string());
            } else {
                errors.push(format!("line {line}: unknown section [{name}]"));
                section = None;
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            errors.push(format!(
                "line {line}: expected `key = value`, got {content:?}"
            ));
            continue;
        };
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        let Some(sec) = section.clone() else {
            if errors.iter().all(|e| !e.contains("unknown section")) {
                errors.push(format!(
                    "line {line}: key {key:?} appears before any section"
                ));
            }
            continue;
        };
        if let Some((prev, _)) = entries.insert((sec.clone(), key.clone()), (line, value)) {
            errors.push(format!(
                "line {line}: [{sec}] {key} already set on line {prev}"
            ));
        }
    }
    (entries, errors)
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let DataConfig::Csv { spec } = &mut cfg.data {
            if spec.path.is_relative() {
                if let Some(dir) = path.parent() {
                    spec.path = dir.join(&spec.path);
                }
            }
        }
        if cfg.name == "run" {
            if let Some(stem) = path.file_stem() {
                cfg.name = stem.to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (mut entries, mut errors) = parse_entries(text);
        let mut r = Reader {
            entries: &mut entries,
            errors: Vec::new(),
        };
        let mut cfg = ExperimentConfig::default();

        let mut name = None;
        if let Some((_, v)) = r.raw("data", "name") {
            name = Some(v);
        }
        let kind = r
            .raw("data", "kind")
            .map(|(_, v)| v)
            .unwrap_or_else(|| "sinusoid".to_string());
        let mut test_n: Option<usize> = r.get("data", "test_n");
        let mut seed: Option<u64> = r.get("data", "seed");
        cfg.data = match kind.as_str() {
            "sinusoid" => {
                let mut spec = SinusoidSpec::default();
                r.set("data", "n", &mut spec.n);
                r.set("data", "noise_sd", &mut spec.noise_sd);
                r.pair("data", "range", &mut spec.range);
                r.pair("data", "gap", &mut spec.gap);
                r.set("data", "omega", &mut spec.omega);
                r.set("data", "slope", &mut spec.slope);
                spec.seed = seed.take().unwrap_or(spec.seed);
                let test_n = test_n.take().unwrap_or(spec.n);
                DataConfig::Sinusoid { spec, test_n }
            }
            "banana" => {
                let mut spec = BananaSpec::default();
                r.set("data", "n", &mut spec.n);
                r.set("data", "noise", &mut spec.noise);
                spec.seed = seed.take().unwrap_or(spec.seed);
                let test_n = test_n.take().unwrap_or(spec.n);
                DataConfig::Banana { spec, test_n }
            }
            "csv" => {
                let path = r.raw("data", "path").map(|(_, v)| PathBuf::from(v));
                if path.is_none() {
                    r.errors
                        .push("[data] path is required for kind = csv".to_string());
                }
                let target_columns = r.list("data", "targets").unwrap_or_default();
                let ignore_columns = r.list("data", "ignore").unwrap_or_default();
                if target_columns.is_empty() {
                    r.errors
                        .push("[data] targets must list at least one column index".to_string());
                }
                let task = match r.raw("data", "task").map(|(_, v)| v).as_deref() {
                    None | Some("regression") => Task::Regression,
                    Some("classification") => Task::Classification,
                    Some(other) => {
                        r.errors.push(format!(
                            "[data] task = {other:?}: expected regression or classification"
                        ));
                        Task::Regression
                    }
                };
                let mut standardize = true;
                r.bool("data", "standardize", &mut standardize);
                let mut train_fraction = 0.9;
                r.set("data", "train_fraction", &mut train_fraction);
                DataConfig::Csv {
                    spec: CsvSpec {
                        path: path.unwrap_or_default(),
                        target_columns,
                        ignore_columns,
                        task,
                        standardize,
                        train_fraction,
                        split_seed: seed.take().unwrap_or(0),
                    },
                }
            }
            other => {
                r.errors.push(format!(
                    "[data] kind = {other:?}: expected sinusoid, banana or csv"
                ));
                DataConfig::Sinusoid {
                    spec: SinusoidSpec::default(),
                    test_n: 0,
                }
            }
        };
        if test_n.is_some() && matches!(cfg.data, DataConfig::Csv { .. }) {
            r.errors
                .push("[data] test_n does not apply to kind = csv; use train_fraction".to_string());
        }
        if let Some(n) = name {
            cfg.name = n;
        }

        let m = &mut cfg.model;
        if let Some(h) = r.list("model", "hidden") {
            m.hidden = h;
        }
        r.set("model", "activation", &mut m.activation);
        match r.raw("model", "prior").map(|(_, v)| v).as_deref() {
            None | Some("per-group") => m.prior = PriorStructure::PerGroup,
            Some("shared") => m.prior = PriorStructure::Shared,
            Some(other) => r.errors.push(format!(
                "[model] prior = {other:?}: expected per-group or shared"
            )),
        }
        r.set("model", "prior_precision", &mut m.prior_precision);
        let classification = cfg.data.is_classification();
        let (lik_key, wrong_key) = if classification {
            ("temperature", "sigma2")
        } else {
            ("sigma2", "temperature")
        };
        r.set("model", lik_key, &mut m.likelihood_param);
        if r.raw("model", wrong_key).is_some() {
            r.errors.push(format!(
                "[model] {wrong_key} does not apply to this likelihood; use {lik_key}"
            ));
        }
        m.classes = r.get("model", "classes");

        let t = &mut cfg.train;
        r.set("train", "epochs", &mut t.epochs);
        r.set("train", "batch_size", &mut t.batch_size);
        let mut lr = t.optimizer.lr();
        r.set("train", "lr", &mut lr);
        let momentum: Option<f64> = r.get("train", "momentum");
        t.optimizer = match r.raw("train", "optimizer").map(|(_, v)| v).as_deref() {
            None | Some("adam") => {
                if momentum.is_some() {
                    r.errors
                        .push("[train] momentum only applies to optimizer = sgd".to_string());
                }
                OptimizerKind::Adam { lr }
            }
            Some("sgd") => OptimizerKind::SgdMomentum {
                lr,
                momentum: momentum.unwrap_or(0.9),
            },
            Some(other) => {
                r.errors.push(format!(
                    "[train] optimizer = {other:?}: expected adam or sgd"
                ));
                OptimizerKind::Adam { lr }
            }
        };
        let every: Option<usize> = r.get("train", "lr_decay_every");
        let factor: Option<f64> = r.get("train", "lr_decay_factor");
        t.lr_decay = match (every, factor) {
            (Some(every), Some(factor)) => Some(StepDecay { every, factor }),
            (None, None) => None,
            _ => {
                r.errors.push(
                    "[train] lr_decay_every and lr_decay_factor must be set together".to_string(),
                );
                None
            }
        };
        r.set("train", "hyper_lr", &mut t.hyper_lr);
        r.set("train", "hyper_steps", &mut t.hyper_steps);
        r.set("train", "burn_in", &mut t.burn_in);
        r.set("train", "marglik_frequency", &mut t.marglik_frequency);
        r.set("train", "seed", &mut t.seed);
        r.bool("train", "online", &mut t.online);
        r.bool("train", "learn_prior", &mut t.learn_prior);
        r.bool("train", "learn_likelihood", &mut t.learn_likelihood);

        r.set("curvature", "kind", &mut cfg.train.curvature);
        r.set("curvature", "samples", &mut cfg.predictive_samples);

        let values: Option<Vec<f64>> = r.list("grid", "prior_precisions");
        let lo: Option<f64> = r.get("grid", "min");
        let hi: Option<f64> = r.get("grid", "max");
        let points: Option<usize> = r.get("grid", "points");
        cfg.grid = match (values, lo, hi, points) {
            (Some(v), None, None, None) => Some(GridConfig {
                prior_precisions: v,
            }),
            (None, Some(lo), Some(hi), Some(p)) => Some(GridConfig::log_spaced(lo, hi, p)),
            (None, None, None, None) => None,
            _ => {
                r.errors.push(
                    "[grid] give either prior_precisions or all of min, max and points".to_string(),
                );
                None
            }
        };

        let leftover: Vec<String> = r
            .entries
            .iter()
            .map(|((sec, key), (line, _))| format!("line {line}: unknown key [{sec}] {key}"))
            .collect();
        errors.extend(r.errors);
        errors.extend(leftover);
        errors.extend(cfg.semantic_errors());
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors))
        }
    }

    fn semantic_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        match &self.data {
            DataConfig::Sinusoid { spec, .. } => {
                if spec.n < 2 {
                    errs.push("[data] n must be >= 2".to_string());
                }
                if spec.noise_sd.is_nan() || spec.noise_sd < 0.0 {
                    errs.push("[data] noise_sd must be >= 0".to_string());
                }
                let (lo, hi) = spec.range;
                let (a, b) = spec.gap;
                if !(lo <= a && a <= b && b <= hi && lo < hi) {
                    errs.push("[data] need range.0 <= gap.0 <= gap.1 <= range.1".to_string());
                }
            }
            DataConfig::Banana { spec, .. } => {
                if spec.n < 2 {
                    errs.push("[data] n must be >= 2".to_string());
                }
                if spec.noise.is_nan() || spec.noise < 0.0 {
                    errs.push("[data] noise must be >= 0".to_string());
                }
            }
            DataConfig::Csv { spec } => {
                if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
                    errs.push("[data] train_fraction must lie in (0, 1)".to_string());
                }
            }
        }
        if !(self.model.prior_precision > 0.0 && self.model.prior_precision.is_finite()) {
            errs.push("[model] prior_precision must be positive".to_string());
        }
        if !(self.model.likelihood_param > 0.0 && self.model.likelihood_param.is_finite()) {
            errs.push("[model] likelihood parameter must be positive".to_string());
        }
        if self.model.hidden.contains(&0) {
            errs.push("[model] hidden widths must be >= 1".to_string());
        }
        if self.predictive_samples == 0 {
            errs.push("[curvature] samples must be >= 1".to_string());
        }
        if let Some(g) = &self.grid {
            if g.prior_precisions.is_empty()
                || g.prior_precisions
                    .iter()
                    .any(|d| !(*d > 0.0 && d.is_finite()))
            {
                errs.push("[grid] needs at least one positive prior precision".to_string());
            }
        }
        if let Err(Error::Config(e)) = self.train.validate() {
            errs.extend(e.into_iter().map(|s| format!("[train] {s}")));
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.semantic_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::CurvatureKind;

    const FULL: &str = "
# sinusoid regression
[data]
kind = sinusoid
n = 40
noise_sd = 0.1
gap = 2.5, 4.5
seed = 3

[model]
hidden = 50, 50
activation = relu
prior = shared
prior_precision = 0.5
sigma2 = 0.2

[train]
epochs = 20
batch_size = 16
lr = 0.01
hyper_lr = 0.05
hyper_steps = 10
burn_in = 5
marglik_frequency = 5
online = false

[curvature]
kind = kfac
samples = 50
";

    #[test]
    fn parses_every_section() {
        let cfg = ExperimentConfig::parse(FULL).unwrap();
        let DataConfig::Sinusoid { spec, test_n } = &cfg.data else {
            panic!("wrong kind")
        };
        assert_eq!((spec.n, spec.seed, *test_n), (40, 3, 40));
        assert_eq!(spec.gap, (2.5, 4.5));
        assert_eq!(cfg.model.hidden, vec![50, 50]);
        assert_eq!(cfg.model.activation, Activation::Relu);
        assert_eq!(cfg.model.prior, PriorStructure::Shared);
        assert_eq!(cfg.model.likelihood_param, 0.2);
        assert_eq!(cfg.train.optimizer, OptimizerKind::Adam { lr: 0.01 });
        assert_eq!(
            (
                cfg.train.hyper_steps,
                cfg.train.burn_in,
                cfg.train.marglik_frequency
            ),
            (10, 5, 5)
        );
        assert!(!cfg.train.online);
        assert_eq!(cfg.train.curvature, CurvatureKind::Kfac);
        assert_eq!(cfg.predictive_samples, 50);
        assert!(cfg.grid.is_none());
    }

    #[test]
    fn empty_config_is_default() {
        assert_eq!(
            ExperimentConfig::parse("").unwrap(),
            ExperimentConfig::default()
        );
        let cfg = ExperimentConfig::parse("[model]\nhidden =\n").unwrap();
        assert!(cfg.model.hidden.is_empty());
    }

    #[test]
    fn unknown_keys_are_all_reported() {
        let text = "[train]\nepochs = 3\nepohcs = 4\nhyper_step = 2\n[model]\nwidth = 3\n[optim]\nlr = 1\n";
        let Err(Error::Config(errs)) = ExperimentConfig::parse(text) else {
            panic!("expected config error")
        };
        let joined = errs.join("\n");
        for needle in ["epohcs", "hyper_step", "width", "[optim]"] {
            assert!(joined.contains(needle), "{needle} missing from {joined}");
        }
    }

    #[test]
    fn bad_values_are_reported_with_location() {
        let text = "[train]\nepochs = ten\n[curvature]\nkind = dense\n[data]\nn = 1\n";
        let Err(Error::Config(errs)) = ExperimentConfig::parse(text) else {
            panic!("expected config error")
        };
        assert_eq!(errs.len(), 3, "{errs:?}");
        assert!(errs[0].contains("line 2") || errs.iter().any(|e| e.contains("line 2")));
    }

    #[test]
    fn duplicate_and_misplaced_keys() {
        let Err(Error::Config(errs)) =
            ExperimentConfig::parse("epochs = 1\n[train]\nseed = 1\nseed = 2\n")
        else {
            panic!("expected config error")
        };
        assert_eq!(errs.len(), 2, "{errs:?}");
    }

    #[test]
    fn wrong_likelihood_key() {
        let text = "[data]\nkind = banana\n[model]\nsigma2 = 0.1\n";
        assert!(matches!(
            ExperimentConfig::parse(text),
            Err(Error::Config(_))
        ));
        let cfg =
            ExperimentConfig::parse("[data]\nkind = banana\n[model]\ntemperature = 0.5\n").unwrap();
        assert_eq!(cfg.model.likelihood_param, 0.5);
        assert!(cfg.data.is_classification());
    }

    #[test]
    fn csv_and_grid_sections() {
        let text = "[data]\nkind = csv\npath = energy.csv\ntargets = 8\nignore = 9\nseed = 4\n[grid]\nmin = 1e-4\nmax = 1e3\npoints = 20\n[train]\noptimizer = sgd\nmomentum = 0.5\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        let DataConfig::Csv { spec } = &cfg.data else {
            panic!()
        };
        assert_eq!(spec.target_columns, vec![8]);
        assert_eq!(spec.ignore_columns, vec![9]);
        assert_eq!(spec.split_seed, 4);
        assert_eq!(spec.train_fraction, 0.9);
        let grid = cfg.grid.unwrap().prior_precisions;
        assert_eq!(grid.len(), 20);
        assert!((grid[0] - 1e-4).abs() < 1e-18 && (grid[19] - 1e3).abs() < 1e-9);
        assert_eq!(
            cfg.train.optimizer,
            OptimizerKind::SgdMomentum {
                lr: 1e-3,
                momentum: 0.5
            }
        );
    }

    #[test]
    fn log_spaced_grid_ratios() {
        let g = GridConfig::log_spaced(1e-4, 1e3, 20).prior_precisions;
        let r = g[1] / g[0];
        for w in g.windows(2) {
            assert!((w[1] / w[0] - r).abs() < 1e-12);
        }
    }

    #[test]
    fn relative_csv_path_resolves_against_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("uci.cfg");
        std::fs::write(
            &path,
            "[data]\nkind = csv\npath = energy.csv\ntargets = 8\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::from_file(&path).unwrap();
        let DataConfig::Csv { spec } = &cfg.data else {
            panic!()
        };
        assert_eq!(spec.path, dir.path().join("energy.csv"));
        assert_eq!(cfg.name, "uci");
    }
}
