use chrono::NaiveDate;

use super::{Corpus, LabeledExample};
use crate::error::{Error, Result};
use crate::nncore::rng::{derive_seed, Purpose, RngStream};

/// Round half up, tolerant of the representation error in products such
/// as `25 * 0.1`.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

/// Partitions by date: strictly before `cutoff` versus on or after it.
///
/// `filter`, when given, further restricts the on-or-after side (the
/// held-out target set is only the examples about one crop and state).
pub fn temporal_split(
    corpus: &Corpus,
    cutoff: NaiveDate,
    filter: Option<&dyn Fn(&LabeledExample) -> bool>,
) -> Result<(Corpus, Corpus)> {
    let mut before = Vec::new();
    let mut after = Vec::new();
    for (i, e) in corpus.examples().iter().enumerate() {
        let date = e.date.ok_or(Error::MissingDate { index: i })?;
        if date < cutoff {
            before.push(i);
        } else if filter.is_none_or(|f| f(e)) {
            after.push(i);
        }
    }
    Ok((corpus.select(&before), corpus.select(&after)))
}

/// A seeded random `(train, test)` partition with `round(n * test_fraction)`
/// test examples.
pub fn shuffle_split(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} not in (0, 1)"
        )));
    }
    let n = corpus.len();
    let n_test = round_half_up(n as f64 * test_fraction);
    if n < 2 || n_test < 1 || n_test >= n {
        return Err(Error::InsufficientData(format!(
            "cannot split {n} example(s) with test fraction {test_fraction}"
        )));
    }
    let perm = RngStream::new(seed, Purpose::Split).permutation(n);
    let (test, train) = perm.split_at(n_test);
    Ok((corpus.select(train), corpus.select(test)))
}

/// Draws `val_size` validation examples from `source` with the same
/// permutation stream that [`infuse_validation`] uses for its source side.
pub fn validation_split(source: &Corpus, val_size: usize, seed: u64) -> Result<(Corpus, Corpus)> {
    if val_size >= source.len() {
        return Err(Error::InsufficientData(format!(
            "source has {} example(s), cannot supply {val_size} validation examples and a training set",
            source.len()
        )));
    }
    let perm = RngStream::new(derive_seed(seed, 0), Purpose::Split).permutation(source.len());
    let (val, train) = perm.split_at(val_size);
    Ok((source.select(train), source.select(val)))
}

#[derive(Debug, Clone)]
pub struct InfusedSplit {
    pub train: Corpus,
    pub val: Corpus,
    pub test: Corpus,
    /// How many validation examples came from the target-domain corpus.
    pub val_from_target: usize,
    pub val_from_source: usize,
}

/// Validation infusion.
///
/// `round(val_size * infusion_fraction)` target-domain examples go to
/// validation; every other target example goes to test, which must hold at
/// least `round(n_target * test_fraction)` examples. The rest of the
/// validation set is drawn from `source`, and train is whatever remains of
/// `source`.
pub fn infuse_validation(
    source: &Corpus,
    target: &Corpus,
    infusion_fraction: f64,
    test_fraction: f64,
    val_size: usize,
    seed: u64,
) -> Result<InfusedSplit> {
    if !(0.0..=1.0).contains(&infusion_fraction) {
        return Err(Error::InvalidArgument(format!(
            "infusion fraction {infusion_fraction} not in [0, 1]"
        )));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target test fraction {test_fraction} not in (0, 1)"
        )));
    }
    if val_size == 0 {
        return Err(Error::InvalidArgument("validation size must be positive".into()));
    }
    if source.scheme() != target.scheme() {
        return Err(Error::MixedSchemes(format!(
            "source is {}, target is {}",
            source.scheme(),
            target.scheme()
        )));
    }
    let n_target = target.len();
    let val_from_target = round_half_up(val_size as f64 * infusion_fraction).min(val_size);
    let min_test = round_half_up(n_target as f64 * test_fraction).max(1);
    if val_from_target + min_test > n_target {
        return Err(Error::InsufficientData(format!(
            "target corpus has {n_target} example(s); needs {val_from_target} for validation plus {min_test} for test"
        )));
    }
    let val_from_source = val_size - val_from_target;
    let (train, val_source) = validation_split(source, val_from_source, seed)?;

    let perm = RngStream::new(derive_seed(seed, 1), Purpose::Split).permutation(n_target);
    let (val_target_idx, test_idx) = perm.split_at(val_from_target);
    let mut val = target.select(val_target_idx).into_examples();
    val.extend(val_source.into_examples());

    Ok(InfusedSplit {
        train,
        val: Corpus::new(source.scheme(), val)?,
        test: target.select(test_idx),
        val_from_target,
        val_from_source,
    })
}
