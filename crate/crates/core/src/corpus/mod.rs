//! Labeled text corpora: ingestion, normalization, label schemes, combining
//! and the seeded split procedures used by the experiments.

mod load;
mod normalize;
mod split;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use load::{load_csv, read_texts, write_csv, IngestStats, LabelKind, LoadOptions, LoadedCorpus, Thresholds};
pub use normalize::normalize_text;
pub use split::{
    infuse_validation, round_half_up, shuffle_split, temporal_split, validation_split, InfusedSplit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Five,
    Ternary,
    Binary,
}

impl Scheme {
    pub fn num_classes(self) -> usize {
        match self {
            Scheme::Five => 5,
            Scheme::Ternary => 3,
            Scheme::Binary => 2,
        }
    }

    pub fn class_name(self, class: usize) -> &'static str {
        match (self, class) {
            (Scheme::Five, 0) => "very_negative",
            (Scheme::Five, 1) => "negative",
            (Scheme::Five, 2) => "neutral",
            (Scheme::Five, 3) => "positive",
            (Scheme::Five, 4) => "very_positive",
            (Scheme::Ternary, 0) | (Scheme::Binary, 0) => "negative",
            (Scheme::Ternary, 1) => "neutral",
            (Scheme::Ternary, 2) | (Scheme::Binary, 1) => "positive",
            _ => "invalid",
        }
    }

    /// The scheme whose class count is `n` (2 → Binary, 3 → Ternary, 5 → Five).
    pub fn from_num_classes(n: usize) -> Option<Self> {
        match n {
            2 => Some(Scheme::Binary),
            3 => Some(Scheme::Ternary),
            5 => Some(Scheme::Five),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Five => "five",
            Scheme::Ternary => "ternary",
            Scheme::Binary => "binary",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "five" | "5" => Ok(Scheme::Five),
            "ternary" | "3" => Ok(Scheme::Ternary),
            "binary" | "2" => Ok(Scheme::Binary),
            other => Err(Error::InvalidArgument(format!("unknown label scheme `{other}`"))),
        }
    }
}

/// A class index tagged with the scheme it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentimentLabel {
    scheme: Scheme,
    value: u8,
}

impl SentimentLabel {
    pub fn new(scheme: Scheme, value: usize) -> Result<Self> {
        if value >= scheme.num_classes() {
            return Err(Error::InvalidArgument(format!(
                "label {value} out of range for {scheme} scheme"
            )));
        }
        Ok(Self {
            scheme,
            value: value as u8,
        })
    }

    pub fn scheme(self) -> Scheme {
        self.scheme
    }

    pub fn value(self) -> usize {
        self.value as usize
    }

    pub fn name(self) -> &'static str {
        self.scheme.class_name(self.value())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    AG,
    KWT,
    GD,
    SDC,
    RT,
    SYN,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Source {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AG" => Ok(Source::AG),
            "KWT" => Ok(Source::KWT),
            "GD" => Ok(Source::GD),
            "SDC" => Ok(Source::SDC),
            "RT" => Ok(Source::RT),
            "SYN" => Ok(Source::SYN),
            other => Err(Error::InvalidArgument(format!("unknown source tag `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledExample {
    pub tokens: Vec<String>,
    pub label: SentimentLabel,
    pub source: Source,
    pub date: Option<NaiveDate>,
}

impl LabeledExample {
    pub fn new(tokens: Vec<String>, label: SentimentLabel, source: Source) -> Self {
        Self {
            tokens,
            label,
            source,
            date: None,
        }
    }

    pub fn with_date(mut self, date: NaiveDate) -> Self {
        self.date = Some(date);
        self
    }

    /// Tokens joined by single spaces.
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// A list of examples that all share one label scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    scheme: Scheme,
    examples: Vec<LabeledExample>,
}

impl Corpus {
    pub fn new(scheme: Scheme, examples: Vec<LabeledExample>) -> Result<Self> {
        if let Some(bad) = examples.iter().position(|e| e.label.scheme() != scheme) {
            return Err(Error::MixedSchemes(format!(
                "example {bad} is {} but corpus is {scheme}",
                examples[bad].label.scheme()
            )));
        }
        Ok(Self { scheme, examples })
    }

    pub fn empty(scheme: Scheme) -> Self {
        Self {
            scheme,
            examples: Vec::new(),
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn into_examples(self) -> Vec<LabeledExample> {
        self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label.value()).collect()
    }

    /// Per-class example counts, indexed by class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.scheme.num_classes()];
        for e in &self.examples {
            counts[e.label.value()] += 1;
        }
        counts
    }

    /// Subset by index; indices are trusted to be in range.
    pub(crate) fn select(&self, indices: &[usize]) -> Corpus {
        Corpus {
            scheme: self.scheme,
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }
}

/// Keeps the first occurrence of each distinct token sequence.
pub fn dedup(corpus: Corpus) -> Corpus {
    let scheme = corpus.scheme;
    let mut seen: HashSet<Vec<String>> = HashSet::with_capacity(corpus.len());
    let examples = corpus
        .examples
        .into_iter()
        .filter(|e| seen.insert(e.tokens.clone()))
        .collect();
    Corpus { scheme, examples }
}

fn map_value(from: Scheme, to: Scheme, value: usize) -> Option<usize> {
    match (from, to) {
        (a, b) if a == b => Some(value),
        (Scheme::Five, Scheme::Ternary) => Some(match value {
            0 | 1 => 0,
            2 => 1,
            _ => 2,
        }),
        (Scheme::Ternary, Scheme::Binary) => match value {
            0 => Some(0),
            1 => None,
            _ => Some(1),
        },
        _ => unreachable!("transition checked by caller"),
    }
}

/// Relabels a corpus into `target`.
///
/// Five → Ternary groups {0,1} / {2} / {3,4}; Ternary → Binary drops neutral
/// examples. Mapping a corpus onto its own scheme is the identity.
pub fn map_labels(corpus: Corpus, target: Scheme) -> Result<Corpus> {
    let from = corpus.scheme;
    let supported = from == target
        || matches!(
            (from, target),
            (Scheme::Five, Scheme::Ternary) | (Scheme::Ternary, Scheme::Binary)
        );
    if !supported {
        return Err(Error::UnsupportedTransition { from, to: target });
    }
    let examples = corpus
        .examples
        .into_iter()
        .filter_map(|mut e| {
            let v = map_value(from, target, e.label.value())?;
            e.label = SentimentLabel::new(target, v).expect("mapped value within target range");
            Some(e)
        })
        .collect();
    Ok(Corpus {
        scheme: target,
        examples,
    })
}

/// Concatenates ternary corpora (source tags preserved) and deduplicates.
pub fn combine(corpora: &[Corpus]) -> Result<Corpus> {
    if corpora.is_empty() {
        return Err(Error::Empty("corpus list"));
    }
    if let Some(bad) = corpora.iter().find(|c| c.scheme != Scheme::Ternary) {
        return Err(Error::MixedSchemes(format!(
            "combine requires ternary corpora, found {}",
            bad.scheme
        )));
    }
    let examples = corpora.iter().flat_map(|c| c.examples.iter().cloned()).collect();
    Ok(dedup(Corpus {
        scheme: Scheme::Ternary,
        examples,
    }))
}

/// The four named training combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Combo {
    /// Twitter only: GD + SDC.
    TO,
    /// Full combo: GD + SDC + RT.
    FC,
    /// Twitter only with agriculture: GD + SDC + AG.
    TOA,
    /// Full combo with agriculture: GD + SDC + RT + AG.
    FCA,
}

impl Combo {
    pub fn sources(self) -> &'static [Source] {
        match self {
            Combo::TO => &[Source::GD, Source::SDC],
            Combo::FC => &[Source::GD, Source::SDC, Source::RT],
            Combo::TOA => &[Source::GD, Source::SDC, Source::AG],
            Combo::FCA => &[Source::GD, Source::SDC, Source::RT, Source::AG],
        }
    }

    pub fn build(self, datasets: &BTreeMap<Source, Corpus>) -> Result<Corpus> {
        let members = self
            .sources()
            .iter()
            .map(|s| {
                datasets
                    .get(s)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("{self:?} needs dataset {s}")))
            })
            .collect::<Result<Vec<_>>>()?;
        combine(&members)
    }
}

/// Per-class fractions in class-index order (negative, neutral, positive for ternary).
pub fn class_distribution(corpus: &Corpus) -> Result<Vec<f64>> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let n = corpus.len() as f64;
    Ok(corpus.class_counts().into_iter().map(|c| c as f64 / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(words: &str, scheme: Scheme, v: usize) -> LabeledExample {
        LabeledExample::new(
            words.split(' ').map(str::to_string).collect(),
            SentimentLabel::new(scheme, v).unwrap(),
            Source::SYN,
        )
    }

    fn ternary(items: &[(&str, usize)]) -> Corpus {
        Corpus::new(
            Scheme::Ternary,
            items.iter().map(|(w, v)| ex(w, Scheme::Ternary, *v)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn label_range_is_enforced() {
        assert!(SentimentLabel::new(Scheme::Five, 4).is_ok());
        assert!(SentimentLabel::new(Scheme::Five, 5).is_err());
        assert!(SentimentLabel::new(Scheme::Binary, 2).is_err());
    }

    #[test]
    fn corpus_rejects_mixed_schemes() {
        let a = ex("a", Scheme::Ternary, 0);
        let b = ex("b", Scheme::Binary, 0);
        assert!(matches!(
            Corpus::new(Scheme::Ternary, vec![a, b]),
            Err(Error::MixedSchemes(_))
        ));
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        let c = ternary(&[("a", 0), ("b", 1), ("a", 2)]);
        let d = dedup(c);
        assert_eq!(d.len(), 2);
        assert_eq!(d.examples()[0].label.value(), 0);
        assert_eq!(d.examples()[1].tokens, vec!["b"]);
        assert!(dedup(Corpus::empty(Scheme::Ternary)).is_empty());
        let distinct = ternary(&[("a", 0), ("b", 1), ("c", 2)]);
        assert_eq!(dedup(distinct.clone()), distinct);
    }

    #[test]
    fn five_to_ternary_grouping() {
        let c = Corpus::new(
            Scheme::Five,
            (0..5).map(|v| ex(&format!("w{v}"), Scheme::Five, v)).collect(),
        )
        .unwrap();
        let t = map_labels(c, Scheme::Ternary).unwrap();
        assert_eq!(t.labels(), vec![0, 0, 1, 2, 2]);
        assert_eq!(t.scheme(), Scheme::Ternary);
    }

    #[test]
    fn ternary_to_binary_drops_neutral() {
        let mut items = Vec::new();
        for i in 0..4 {
            items.push((format!("n{i}"), 0));
        }
        for i in 0..3 {
            items.push((format!("u{i}"), 1));
        }
        for i in 0..3 {
            items.push((format!("p{i}"), 2));
        }
        let refs: Vec<(&str, usize)> = items.iter().map(|(w, v)| (w.as_str(), *v)).collect();
        let b = map_labels(ternary(&refs), Scheme::Binary).unwrap();
        assert_eq!(b.len(), 7);
        assert_eq!(b.class_counts(), vec![4, 3]);
    }

    #[test]
    fn unsupported_transitions_error() {
        let b = map_labels(ternary(&[("a", 0)]), Scheme::Binary).unwrap();
        assert!(matches!(
            map_labels(b, Scheme::Ternary),
            Err(Error::UnsupportedTransition { .. })
        ));
        let five = Corpus::new(Scheme::Five, vec![ex("a", Scheme::Five, 0)]).unwrap();
        assert!(map_labels(five, Scheme::Binary).is_err());
    }

    #[test]
    fn combine_identity_and_absorption() {
        let x = ternary(&[("a", 0), ("b", 1)]);
        assert_eq!(combine(&[x.clone()]).unwrap(), x);
        assert_eq!(combine(&[x.clone(), x.clone()]).unwrap(), x);
        let five = Corpus::new(Scheme::Five, vec![ex("a", Scheme::Five, 0)]).unwrap();
        assert!(combine(&[x, five]).is_err());
    }

    #[test]
    fn combine_sizes_add_without_overlap() {
        // GD (13871) + SDC (6943), no shared token sequences.
        let gd: Vec<LabeledExample> = (0..13871)
            .map(|i| {
                let mut e = ex(&format!("gd{i}"), Scheme::Ternary, i % 3);
                e.source = Source::GD;
                e
            })
            .collect();
        let sdc: Vec<LabeledExample> = (0..6943)
            .map(|i| {
                let mut e = ex(&format!("sdc{i}"), Scheme::Ternary, i % 3);
                e.source = Source::SDC;
                e
            })
            .collect();
        let mut sets = BTreeMap::new();
        sets.insert(Source::GD, Corpus::new(Scheme::Ternary, gd).unwrap());
        sets.insert(Source::SDC, Corpus::new(Scheme::Ternary, sdc).unwrap());
        let to = Combo::TO.build(&sets).unwrap();
        assert_eq!(to.len(), 20814);
        assert_eq!(to.examples()[0].source, Source::GD);
        assert_eq!(to.examples()[20813].source, Source::SDC);
        assert!(Combo::FC.build(&sets).is_err());
    }

    #[test]
    fn class_distribution_cases() {
        let c = ternary(&[("a", 0), ("b", 0), ("c", 1), ("d", 2)]);
        assert_eq!(class_distribution(&c).unwrap(), vec![0.5, 0.25, 0.25]);
        let single = ternary(&[("a", 0)]);
        assert_eq!(class_distribution(&single).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(class_distribution(&Corpus::empty(Scheme::Ternary)).is_err());
    }
}
