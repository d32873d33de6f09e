use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{dedup, normalize_text, Corpus, LabeledExample, Scheme, SentimentLabel, Source};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Integer,
    Continuous,
}

impl std::str::FromStr for LabelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "integer" | "int" => Ok(LabelKind::Integer),
            "continuous" | "real" => Ok(LabelKind::Continuous),
            other => Err(Error::InvalidArgument(format!("unknown label kind `{other}`"))),
        }
    }
}

/// Continuous-score bands: `< negative_below` → negative,
/// `> positive_above` → positive, anything in between (inclusive) → neutral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub negative_below: f64,
    pub positive_above: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            negative_below: 0.4,
            positive_above: 0.6,
        }
    }
}

impl Thresholds {
    pub fn classify(&self, score: f64) -> usize {
        if score < self.negative_below {
            0
        } else if score > self.positive_above {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Source tag used when the file has no `source` column.
    pub source: Source,
    pub scheme: Scheme,
    pub label_kind: LabelKind,
    pub thresholds: Thresholds,
}

impl LoadOptions {
    pub fn new(source: Source, scheme: Scheme, label_kind: LabelKind) -> Self {
        Self {
            source,
            scheme,
            label_kind,
            thresholds: Thresholds::default(),
        }
    }
}

/// Row accounting for one ingestion.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub rows: usize,
    /// Rows skipped because a field could not be parsed (bad label text,
    /// bad date, unknown source tag, wrong field count).
    pub malformed: usize,
    pub malformed_lines: Vec<u64>,
    pub empty_dropped: usize,
    pub duplicates_dropped: usize,
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub stats: IngestStats,
}

struct Columns {
    text: usize,
    label: usize,
    date: Option<usize>,
    source: Option<usize>,
}

fn columns(path: &Path, headers: &csv::StringRecord, need_label: bool) -> Result<Columns> {
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
    };
    let missing = |column: &str| Error::MissingColumn {
        path: path.to_path_buf(),
        column: column.to_string(),
    };
    let text = find("text").ok_or_else(|| missing("text"))?;
    let label = match find("label") {
        Some(i) => i,
        None if need_label => return Err(missing("label")),
        None => usize::MAX,
    };
    Ok(Columns {
        text,
        label,
        date: find("date"),
        source: find("source"),
    })
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().flexible(true).from_reader(file))
}

enum RowError {
    Malformed(String),
    Fatal(Error),
}

fn parse_label(
    raw: &str,
    opts: &LoadOptions,
    path: &Path,
    line: u64,
) -> std::result::Result<SentimentLabel, RowError> {
    let raw = raw.trim();
    match opts.label_kind {
        LabelKind::Integer => {
            let v: i64 = raw
                .parse()
                .map_err(|_| RowError::Malformed(format!("label `{raw}` is not an integer")))?;
            if v < 0 || v as usize >= opts.scheme.num_classes() {
                return Err(RowError::Fatal(Error::LabelOutOfRange {
                    path: path.to_path_buf(),
                    line,
                    detail: format!("{v} not in 0..{} ({})", opts.scheme.num_classes(), opts.scheme),
                }));
            }
            Ok(SentimentLabel::new(opts.scheme, v as usize).expect("range checked"))
        }
        LabelKind::Continuous => {
            let v: f64 = raw
                .parse()
                .map_err(|_| RowError::Malformed(format!("label `{raw}` is not a number")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(RowError::Fatal(Error::LabelOutOfRange {
                    path: path.to_path_buf(),
                    line,
                    detail: format!("continuous label {v} outside [0, 1]"),
                }));
            }
            Ok(SentimentLabel::new(Scheme::Ternary, opts.thresholds.classify(v))
                .expect("threshold classes are ternary"))
        }
    }
}

/// Reads a `text,label[,date][,source]` CSV into a normalized, deduplicated corpus.
///
/// Rows whose fields cannot be parsed are skipped, counted in
/// [`IngestStats`] and logged; labels outside the scheme's range are
/// errors. Continuous labels are banded into the ternary scheme with
/// `opts.thresholds`.
pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<LoadedCorpus> {
    let path = path.as_ref();
    if opts.label_kind == LabelKind::Continuous && opts.scheme != Scheme::Ternary {
        return Err(Error::InvalidArgument(
            "continuous labels only map onto the ternary scheme".into(),
        ));
    }
    let mut reader = open(path)?;
    let headers = reader
        .headers()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    let cols = columns(path, &headers, true)?;

    let mut stats = IngestStats::default();
    let mut examples = Vec::new();
    for record in reader.records() {
        stats.rows += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                log::warn!("{}:{line}: skipping malformed row: {e}", path.display());
                stats.malformed += 1;
                stats.malformed_lines.push(line);
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&record, &cols, opts, path, line) {
            Ok(Some(ex)) => examples.push(ex),
            Ok(None) => stats.empty_dropped += 1,
            Err(RowError::Malformed(why)) => {
                log::warn!("{}:{line}: skipping malformed row: {why}", path.display());
                stats.malformed += 1;
                stats.malformed_lines.push(line);
            }
            Err(RowError::Fatal(e)) => return Err(e),
        }
    }
    let before = examples.len();
    let corpus = dedup(Corpus::new(opts.scheme, examples)?);
    stats.duplicates_dropped = before - corpus.len();
    if stats.malformed > 0 {
        log::warn!(
            "{}: {} malformed row(s) skipped",
            path.display(),
            stats.malformed
        );
    }
    Ok(LoadedCorpus { corpus, stats })
}

fn parse_row(
    record: &csv::StringRecord,
    cols: &Columns,
    opts: &LoadOptions,
    path: &Path,
    line: u64,
) -> std::result::Result<Option<LabeledExample>, RowError> {
    let field = |i: usize| record.get(i);
    let text = field(cols.text).ok_or_else(|| RowError::Malformed("missing text field".into()))?;
    let label_raw =
        field(cols.label).ok_or_else(|| RowError::Malformed("missing label field".into()))?;
    let label = parse_label(label_raw, opts, path, line)?;
    let date = match cols.date.and_then(field).map(str::trim) {
        None | Some("") => None,
        Some(d) => Some(
            NaiveDate::parse_from_str(d, "%Y-%m-%d")
                .map_err(|_| RowError::Malformed(format!("date `{d}` is not YYYY-MM-DD")))?,
        ),
    };
    let source = match cols.source.and_then(field).map(str::trim) {
        None | Some("") => opts.source,
        Some(s) => s
            .parse()
            .map_err(|_| RowError::Malformed(format!("unknown source `{s}`")))?,
    };
    let tokens = normalize_text(text);
    if tokens.is_empty() {
        return Ok(None);
    }
    Ok(Some(LabeledExample {
        tokens,
        label,
        source,
        date,
    }))
}

/// Raw `text` column of a CSV, in file order; other columns are ignored.
pub fn read_texts(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let mut reader = open(path)?;
    let headers = reader
        .headers()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    let cols = columns(path, &headers, false)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        out.push(record.get(cols.text).unwrap_or("").to_string());
    }
    Ok(out)
}

/// Writes `text,label,date,source` with integer labels; `load_csv` reads it
/// back with [`LabelKind::Integer`].
pub fn write_csv(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |source: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["text", "label", "date", "source"]).map_err(csv_err)?;
    for e in corpus.examples() {
        let date = e.date.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default();
        w.write_record([e.text(), e.label.value().to_string(), date, e.source.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
