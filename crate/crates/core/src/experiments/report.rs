//! Run reports, cross-validation summaries and their JSON/CSV files.
//!
//! JSON document:
//! ```text
//! { "format_version": 1, "reports": [ {"type": "run", ...} | {"type": "cv", ...} ] }
//! ```
//! CSV: one row per report with the columns of [`CSV_COLUMNS`] followed by
//! `config.<key>` for every config key present in any report. Run reports'
//! confusion matrices go to `<stem>.confusion.csv` next to the CSV, with
//! columns `run,true_class,<one column per predicted class>`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Decimal rendering with at least six significant digits that parses back
/// to the same `f64`.
pub fn format_metric(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let mut s = x.to_string();
    if !s.contains('.') {
        s.push_str(".0");
    }
    let digits = s.trim_start_matches('-').replace('.', "");
    let significant = digits.trim_start_matches('0').len();
    let significant = if x == 0.0 { 1 } else { significant };
    for _ in significant..6 {
        s.push('0');
    }
    s
}

mod metric {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use serde_json::value::RawValue;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        let raw = RawValue::from_string(super::format_metric(*x)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        f64::deserialize(d)
    }
}

mod metric_vec {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};
    use serde_json::value::RawValue;

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for &x in xs {
            let raw = RawValue::from_string(super::format_metric(x)).map_err(serde::ser::Error::custom)?;
            seq.serialize_element(&raw)?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<f64>::deserialize(d)
    }
}

mod metric_opt {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match x {
            Some(v) => super::metric::serialize(v, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Option::<f64>::deserialize(d)
    }
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_pairs(classes: usize, truth: &[usize], predicted: &[usize]) -> Self {
        let mut m = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.counts[t][p] += 1;
        }
        m
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch loss (including the L2 term); absent for epoch 0.
    #[serde(with = "metric_opt")]
    pub train_loss: Option<f64>,
    #[serde(with = "metric_opt")]
    pub train_accuracy: Option<f64>,
    /// Absent when training without a dev set.
    #[serde(with = "metric_opt")]
    pub dev_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfusionInfo {
    #[serde(with = "metric")]
    pub fraction: f64,
    pub val_from_target: usize,
    pub val_from_source: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model_kind: String,
    pub num_classes: usize,
    pub seed: u64,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    /// Entry 0 is the untrained model.
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    #[serde(with = "metric")]
    pub best_dev_accuracy: f64,
    #[serde(with = "metric")]
    pub test_accuracy: f64,
    pub test_confusion: ConfusionMatrix,
    /// SHA-256 of the serialized best-dev snapshot.
    pub snapshot_hash: String,
    /// SHA-256 of the parameters after the last epoch.
    pub final_hash: String,
    pub infusion: Option<InfusionInfo>,
    #[serde(with = "metric")]
    pub wall_clock_seconds: f64,
    /// Training time of each epoch (forward, backward and updates only).
    #[serde(with = "metric_vec")]
    pub epoch_seconds: Vec<f64>,
}

impl RunReport {
    /// Copy with the timing fields zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> RunReport {
        RunReport {
            wall_clock_seconds: 0.0,
            epoch_seconds: vec![0.0; self.epoch_seconds.len()],
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    #[serde(with = "metric_vec")]
    pub fold_accuracies: Vec<f64>,
    #[serde(with = "metric")]
    pub median: f64,
    #[serde(with = "metric")]
    pub iqr: f64,
    pub seed: u64,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Report {
    Run(RunReport),
    Cv(CvSummary),
}

impl Report {
    fn config(&self) -> &BTreeMap<String, String> {
        match self {
            Report::Run(r) => &r.config,
            Report::Cv(c) => &c.config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub format_version: u32,
    pub reports: Vec<Report>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidArgument(format!("unknown report format '{other}'"))),
        }
    }
}

pub const CSV_COLUMNS: &[&str] = &[
    "run",
    "type",
    "model_kind",
    "num_classes",
    "seed",
    "config_hash",
    "train_size",
    "dev_size",
    "test_size",
    "best_epoch",
    "best_dev_accuracy",
    "test_accuracy",
    "median",
    "iqr",
    "fold_accuracies",
    "infusion_fraction",
    "val_from_target",
    "val_from_source",
    "wall_clock_seconds",
];

pub fn to_json(reports: &[Report]) -> Result<String> {
    let doc = ReportDocument {
        format_version: REPORT_FORMAT_VERSION,
        reports: reports.to_vec(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn parse_report_json(text: &str) -> Result<ReportDocument> {
    let doc: ReportDocument = serde_json::from_str(text)?;
    if doc.format_version != REPORT_FORMAT_VERSION {
        return Err(Error::Config(format!(
            "report format_version {} (supported: {REPORT_FORMAT_VERSION})",
            doc.format_version
        )));
    }
    Ok(doc)
}

fn csv_row(i: usize, r: &Report, config_keys: &[&String]) -> Vec<String> {
    let blank = String::new;
    let mut row = vec![i.to_string()];
    match r {
        Report::Run(r) => {
            let inf = r.infusion.as_ref();
            row.extend([
                "run".into(),
                r.model_kind.clone(),
                r.num_classes.to_string(),
                r.seed.to_string(),
                r.config_hash.clone(),
                r.train_size.to_string(),
                r.dev_size.to_string(),
                r.test_size.to_string(),
                r.best_epoch.to_string(),
                format_metric(r.best_dev_accuracy),
                format_metric(r.test_accuracy),
                blank(),
                blank(),
                blank(),
                inf.map(|x| format_metric(x.fraction)).unwrap_or_default(),
                inf.map(|x| x.val_from_target.to_string()).unwrap_or_default(),
                inf.map(|x| x.val_from_source.to_string()).unwrap_or_default(),
                format_metric(r.wall_clock_seconds),
            ]);
        }
        Report::Cv(c) => {
            row.extend([
                "cv".into(),
                c.config.get("kind").cloned().unwrap_or_default(),
                blank(),
                c.seed.to_string(),
                c.config_hash.clone(),
                blank(),
                blank(),
                blank(),
                blank(),
                blank(),
                blank(),
                format_metric(c.median),
                format_metric(c.iqr),
                c.fold_accuracies.iter().map(|&a| format_metric(a)).collect::<Vec<_>>().join(";"),
                blank(),
                blank(),
                blank(),
                blank(),
            ]);
        }
    }
    let cfg = r.config();
    row.extend(config_keys.iter().map(|k| cfg.get(*k).cloned().unwrap_or_default()));
    row
}

/// `<stem>.confusion.csv` beside `path`.
pub fn confusion_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
    path.with_file_name(format!("{stem}.confusion.csv"))
}

fn write_csv(reports: &[Report], path: &Path) -> Result<()> {
    let keys: BTreeSet<&String> = reports.iter().flat_map(|r| r.config().keys()).collect();
    let keys: Vec<&String> = keys.into_iter().collect();
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = CSV_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(keys.iter().map(|k| format!("config.{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, r) in reports.iter().enumerate() {
        w.write_record(csv_row(i, r, &keys)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let runs: Vec<(usize, &RunReport)> = reports
        .iter()
        .enumerate()
        .filter_map(|(i, r)| match r {
            Report::Run(r) => Some((i, r)),
            Report::Cv(_) => None,
        })
        .collect();
    if runs.is_empty() {
        return Ok(());
    }
    let cpath = confusion_path(path);
    let csv_err = |e: csv::Error| Error::Csv {
        path: cpath.clone(),
        source: e,
    };
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(&cpath)
        .map_err(csv_err)?;
    let width = runs.iter().map(|(_, r)| r.num_classes).max().unwrap_or(0);
    let mut header = vec!["run".to_string(), "true_class".to_string()];
    header.extend((0..width).map(|c| format!("pred_{c}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, r) in runs {
        for (t, row) in r.test_confusion.counts.iter().enumerate() {
            let mut rec = vec![i.to_string(), t.to_string()];
            rec.extend(row.iter().map(|c| c.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(&cpath, e))
}

pub fn emit_report(reports: &[Report], path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        ReportFormat::Json => std::fs::write(path, to_json(reports)?).map_err(|e| Error::io(path, e)),
        ReportFormat::Csv => write_csv(reports, path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_format_has_six_significant_digits() {
        assert_eq!(format_metric(0.5), "0.500000");
        assert_eq!(format_metric(1.0), "1.00000");
        assert_eq!(format_metric(0.0), "0.000000");
        assert_eq!(format_metric(0.0125), "0.0125000");
        assert_eq!(format_metric(2.0 / 3.0), (2.0f64 / 3.0).to_string());
        for x in [0.1, 0.7333333333333333, 1e-7, 123.25, 0.388] {
            assert_eq!(format_metric(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn confusion_basics() {
        let m = ConfusionMatrix::from_pairs(3, &[0, 0, 0, 0, 0, 1, 1, 1, 2, 2], &[0, 0, 0, 0, 0, 1, 1, 1, 2, 2]);
        assert_eq!(m.counts, vec![vec![5, 0, 0], vec![0, 3, 0], vec![0, 0, 2]]);
        assert_eq!(m.accuracy(), 1.0);
        assert_eq!(m.row_sums(), vec![5, 3, 2]);
    }

    #[test]
    fn constant_negative_predictor_on_ag_balance() {
        // 38.8% negative in a corpus of 1000
        let truth: Vec<usize> = (0..1000).map(|i| if i < 388 { 0 } else if i < 700 { 1 } else { 2 }).collect();
        let m = ConfusionMatrix::from_pairs(3, &truth, &vec![0; 1000]);
        assert!((m.accuracy() - 0.388).abs() < 1e-12);
    }
}
