//! `key = value` experiment configuration and sweep grids.

use std::collections::BTreeMap;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::corpus::{load_csv, map_labels, Corpus, LabelKind, LoadOptions, Scheme, Source};
use crate::embeddings::DEFAULT_MAX_LEN;
use crate::error::{Error, Result};
use crate::models::{cell_name, join, parse_cell, ModelKind, ModelSpec, MULTI_LAYER_DEPTH};
use crate::nncore::OptimizerKind;

pub const DEFAULT_CNN_LR: f64 = 1e-3;
pub const DEFAULT_RNN_LR: f64 = 1e-4;
pub const DEFAULT_BASELINE_LR: f64 = 1e-2;

/// Every key accepted by [`parse_config`].
pub const CONFIG_KEYS: &[&str] = &[
    "kind",
    "cell",
    "bidirectional",
    "num_layers",
    "multi_layer",
    "hidden_size",
    "filter_sizes",
    "num_filters_per_size",
    "dropout_keep",
    "l2_lambda",
    "dense_hidden",
    "masked_pooling",
    "lr",
    "optimizer",
    "batch_size",
    "epochs",
    "max_grad_norm",
    "max_len",
    "eval_train",
    "embedding_path",
    "train_path",
    "dev_path",
    "test_path",
    "data_path",
    "dev_fraction",
    "test_fraction",
    "scheme",
    "input_scheme",
    "label_kind",
    "source",
    "infusion_fraction",
    "val_size",
    "target_test_fraction",
    "cv_folds",
    "seed",
];

/// Keys whose value is itself a comma-separated list.
const LIST_KEYS: &[&str] = &["filter_sizes"];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// `num_classes` is kept in step with `scheme`.
    pub model: ModelSpec,
    /// `None` picks the per-kind default (CNN 1e-3, RNN 1e-4, baselines 1e-2).
    pub lr: Option<f64>,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_grad_norm: f64,
    pub max_len: usize,
    /// Record train-set accuracy after every epoch.
    pub eval_train: bool,
    pub embedding_path: Option<PathBuf>,
    pub train_path: Option<PathBuf>,
    pub dev_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub data_path: Option<PathBuf>,
    pub dev_fraction: f64,
    pub test_fraction: f64,
    /// Target label scheme of the run.
    pub scheme: Scheme,
    /// Scheme the CSV labels are written in.
    pub input_scheme: Scheme,
    pub label_kind: LabelKind,
    pub source: Source,
    pub infusion_fraction: f64,
    pub val_size: usize,
    pub target_test_fraction: f64,
    pub cv_folds: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::default(),
            lr: None,
            optimizer: OptimizerKind::Adam,
            batch_size: 100,
            epochs: 20,
            max_grad_norm: 5.0,
            max_len: DEFAULT_MAX_LEN,
            eval_train: true,
            embedding_path: None,
            train_path: None,
            dev_path: None,
            test_path: None,
            data_path: None,
            dev_fraction: 0.1,
            test_fraction: 0.1,
            scheme: Scheme::Ternary,
            input_scheme: Scheme::Ternary,
            label_kind: LabelKind::Integer,
            source: Source::AG,
            infusion_fraction: 0.0,
            val_size: 100,
            target_test_fraction: 0.5,
            cv_folds: 3,
            seed: 42,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{value}'"))),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "none").then(|| PathBuf::from(value))
}

fn path_echo(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into())
}

impl ExperimentConfig {
    /// Learning rate after applying the per-kind default.
    pub fn learning_rate(&self) -> f64 {
        self.lr.unwrap_or(match self.model.kind {
            ModelKind::TextCNN => DEFAULT_CNN_LR,
            ModelKind::RNN => DEFAULT_RNN_LR,
            _ => DEFAULT_BASELINE_LR,
        })
    }

    /// Model spec with `num_classes` matching the target scheme.
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            num_classes: self.scheme.num_classes(),
            ..self.model.clone()
        }
    }

    /// Applies `key = value` pairs in order, then validates.
    pub fn apply<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        let mut layers_given = false;
        let mut multi = None;
        for (key, value) in pairs {
            let value = value.trim();
            let m = &mut self.model;
            match key {
                "kind" => m.kind = value.parse()?,
                "cell" => {
                    m.cell = match value.to_ascii_lowercase().as_str() {
                        "" | "none" => None,
                        v => Some(parse_cell(v)?),
                    };
                }
                "bidirectional" => m.bidirectional = parse_bool(key, value)?,
                "num_layers" => {
                    m.num_layers = parse_value(key, value)?;
                    layers_given = true;
                }
                "multi_layer" => multi = Some(parse_bool(key, value)?),
                "hidden_size" => m.hidden_size = parse_value(key, value)?,
                "filter_sizes" => {
                    m.filter_sizes = value
                        .split(',')
                        .map(|v| parse_value(key, v.trim()))
                        .collect::<Result<_>>()?;
                }
                "num_filters_per_size" => m.num_filters_per_size = parse_value(key, value)?,
                "dropout_keep" => m.dropout_keep = parse_value(key, value)?,
                "l2_lambda" => m.l2_lambda = parse_value(key, value)?,
                "dense_hidden" => m.dense_hidden = parse_value(key, value)?,
                "masked_pooling" => m.masked_pooling = parse_bool(key, value)?,
                "lr" => {
                    self.lr = match value {
                        "" | "default" => None,
                        v => Some(parse_value(key, v)?),
                    }
                }
                "optimizer" => {
                    self.optimizer = match value.to_ascii_lowercase().as_str() {
                        "adam" => OptimizerKind::Adam,
                        "sgd" => OptimizerKind::Sgd,
                        _ => return Err(Error::Config(format!("optimizer: unknown '{value}'"))),
                    }
                }
                "batch_size" => self.batch_size = parse_value(key, value)?,
                "epochs" => self.epochs = parse_value(key, value)?,
                "max_grad_norm" => self.max_grad_norm = parse_value(key, value)?,
                "max_len" => self.max_len = parse_value(key, value)?,
                "eval_train" => self.eval_train = parse_bool(key, value)?,
                "embedding_path" => self.embedding_path = optional_path(value),
                "train_path" => self.train_path = optional_path(value),
                "dev_path" => self.dev_path = optional_path(value),
                "test_path" => self.test_path = optional_path(value),
                "data_path" => self.data_path = optional_path(value),
                "dev_fraction" => self.dev_fraction = parse_value(key, value)?,
                "test_fraction" => self.test_fraction = parse_value(key, value)?,
                "scheme" => self.scheme = parse_value(key, value)?,
                "input_scheme" => self.input_scheme = parse_value(key, value)?,
                "label_kind" => self.label_kind = parse_value(key, value)?,
                "source" => self.source = parse_value(key, value)?,
                "infusion_fraction" => self.infusion_fraction = parse_value(key, value)?,
                "val_size" => self.val_size = parse_value(key, value)?,
                "target_test_fraction" => self.target_test_fraction = parse_value(key, value)?,
                "cv_folds" => self.cv_folds = parse_value(key, value)?,
                "seed" => self.seed = parse_value(key, value)?,
                other => return Err(Error::Config(format!("unknown key '{other}'"))),
            }
        }
        if let Some(multi) = multi {
            if !layers_given {
                self.model.num_layers = if multi { MULTI_LAYER_DEPTH } else { 1 };
            }
        }
        self.model.num_classes = self.scheme.num_classes();
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |key: &str, msg: String| Err(Error::Config(format!("{key}: {msg}")));
        let m = &self.model;
        if !(m.dropout_keep > 0.0 && m.dropout_keep <= 1.0) {
            return err("dropout_keep", format!("{} out of range (0, 1]", m.dropout_keep));
        }
        if !(m.l2_lambda >= 0.0 && m.l2_lambda.is_finite()) {
            return err("l2_lambda", format!("{} must be >= 0", m.l2_lambda));
        }
        if let Some(lr) = self.lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return err("lr", format!("{lr} must be positive"));
            }
        }
        if self.batch_size == 0 {
            return err("batch_size", "must be positive".into());
        }
        if !(self.max_grad_norm > 0.0) {
            return err("max_grad_norm", format!("{} must be positive", self.max_grad_norm));
        }
        if self.max_len == 0 {
            return err("max_len", "must be positive".into());
        }
        for (key, f) in [
            ("dev_fraction", self.dev_fraction),
            ("test_fraction", self.test_fraction),
            ("target_test_fraction", self.target_test_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return err(key, format!("{f} out of range (0, 1)"));
            }
        }
        if !(0.0..=1.0).contains(&self.infusion_fraction) {
            return err("infusion_fraction", format!("{} out of range [0, 1]", self.infusion_fraction));
        }
        if self.val_size == 0 {
            return err("val_size", "must be positive".into());
        }
        if self.cv_folds < 2 {
            return err("cv_folds", format!("{} must be at least 2", self.cv_folds));
        }
        if self.scheme == Scheme::Five {
            return err("scheme", "target scheme must be ternary or binary".into());
        }
        self.model_spec().validate(self.max_len)
    }

    /// Canonical `key -> value` rendering of every field; parsing it back
    /// reproduces the config.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let m = &self.model;
        let mut e = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            e.insert(k.to_string(), v);
        };
        put("kind", m.kind.to_string());
        put("cell", m.cell.map(cell_name).unwrap_or("none").into());
        put("bidirectional", m.bidirectional.to_string());
        put("num_layers", m.num_layers.to_string());
        put("hidden_size", m.hidden_size.to_string());
        put("filter_sizes", join(&m.filter_sizes));
        put("num_filters_per_size", m.num_filters_per_size.to_string());
        put("dropout_keep", m.dropout_keep.to_string());
        put("l2_lambda", m.l2_lambda.to_string());
        put("dense_hidden", m.dense_hidden.to_string());
        put("masked_pooling", m.masked_pooling.to_string());
        put("lr", self.lr.map(|v| v.to_string()).unwrap_or_else(|| "default".into()));
        put(
            "optimizer",
            match self.optimizer {
                OptimizerKind::Adam => "adam",
                OptimizerKind::Sgd => "sgd",
            }
            .into(),
        );
        put("batch_size", self.batch_size.to_string());
        put("epochs", self.epochs.to_string());
        put("max_grad_norm", self.max_grad_norm.to_string());
        put("max_len", self.max_len.to_string());
        put("eval_train", self.eval_train.to_string());
        put("embedding_path", path_echo(&self.embedding_path));
        put("train_path", path_echo(&self.train_path));
        put("dev_path", path_echo(&self.dev_path));
        put("test_path", path_echo(&self.test_path));
        put("data_path", path_echo(&self.data_path));
        put("dev_fraction", self.dev_fraction.to_string());
        put("test_fraction", self.test_fraction.to_string());
        put("scheme", self.scheme.to_string());
        put("input_scheme", self.input_scheme.to_string());
        put(
            "label_kind",
            match self.label_kind {
                LabelKind::Integer => "integer",
                LabelKind::Continuous => "continuous",
            }
            .into(),
        );
        put("source", self.source.to_string());
        put("infusion_fraction", self.infusion_fraction.to_string());
        put("val_size", self.val_size.to_string());
        put("target_test_fraction", self.target_test_fraction.to_string());
        put("cv_folds", self.cv_folds.to_string());
        put("seed", self.seed.to_string());
        e
    }

    /// Echo as text, one `key = value` per line.
    pub fn to_text(&self) -> String {
        self.echo().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// First eight bytes (little-endian) of the SHA-256 of [`Self::to_text`].
    pub fn hash(&self) -> u64 {
        let digest = Sha256::digest(self.to_text().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

/// Splits config text into `(key, value)` pairs, dropping comments and
/// blank lines. Keys are checked against [`CONFIG_KEYS`].
fn lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", n + 1)))?;
        let k = k.trim();
        if !CONFIG_KEYS.contains(&k) {
            return Err(Error::Config(format!("line {}: unknown key '{k}'", n + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parses a config file on top of the defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::default();
    c.apply_text(text)?;
    Ok(c)
}

impl ExperimentConfig {
    /// Loads a CSV read as `input_scheme` (ternary for continuous labels)
    /// with `label_kind` and the default `source`, then maps it to `scheme`.
    pub fn load_corpus(&self, path: impl AsRef<std::path::Path>) -> Result<Corpus> {
        let input = match self.label_kind {
            LabelKind::Continuous => Scheme::Ternary,
            LabelKind::Integer => self.input_scheme,
        };
        let loaded = load_csv(path.as_ref(), &LoadOptions::new(self.source, input, self.label_kind))?;
        log::info!(
            "{}: {} example(s) ({} malformed, {} empty, {} duplicate row(s) dropped)",
            path.as_ref().display(),
            loaded.corpus.len(),
            loaded.stats.malformed,
            loaded.stats.empty_dropped,
            loaded.stats.duplicates_dropped
        );
        match (input, self.scheme) {
            (a, b) if a == b => Ok(loaded.corpus),
            (Scheme::Five, Scheme::Binary) => map_labels(map_labels(loaded.corpus, Scheme::Ternary)?, Scheme::Binary),
            _ => map_labels(loaded.corpus, self.scheme),
        }
    }

    /// Applies config text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let pairs = lines(text)?;
        self.apply(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }
}

/// A sweep grid: each key with its candidate values.
///
/// Candidates are comma-separated; for list-valued keys (`filter_sizes`)
/// candidates are separated by `|` and each candidate is a comma list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub axes: Vec<(String, Vec<String>)>,
}

pub fn parse_grid(text: &str) -> Result<Grid> {
    let mut axes: Vec<(String, Vec<String>)> = Vec::new();
    for (k, v) in lines(text)? {
        let sep = if LIST_KEYS.contains(&k.as_str()) { '|' } else { ',' };
        let candidates: Vec<String> = v
            .split(sep)
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if candidates.is_empty() {
            return Err(Error::Config(format!("{k}: no candidate values")));
        }
        if axes.iter().any(|(a, _)| *a == k) {
            return Err(Error::Config(format!("{k}: listed twice in the grid")));
        }
        axes.push((k, candidates));
    }
    Ok(Grid { axes })
}

impl Grid {
    pub fn size(&self) -> usize {
        self.axes.iter().map(|(_, c)| c.len()).product()
    }

    /// Cartesian product applied to `base`, first axis varying slowest.
    pub fn expand(&self, base: &ExperimentConfig) -> Result<Vec<ExperimentConfig>> {
        let mut out = Vec::with_capacity(self.size());
        let mut idx = vec![0usize; self.axes.len()];
        loop {
            let mut c = base.clone();
            c.apply(self.axes.iter().zip(&idx).map(|((k, cand), &i)| (k.as_str(), cand[i].as_str())))?;
            out.push(c);
            let mut axis = self.axes.len();
            loop {
                if axis == 0 {
                    return Ok(out);
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < self.axes[axis].1.len() {
                    break;
                }
                idx[axis] = 0;
            }
        }
    }
}
