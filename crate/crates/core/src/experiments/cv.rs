use std::cmp::Ordering;

use rayon::prelude::*;

use super::config::{parse_grid, ExperimentConfig};
use super::report::{CvSummary, RunReport};
use super::train::train_run;
use crate::corpus::{shuffle_split, Corpus};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nncore::derive_seed;

/// Middle order statistic, or the mean of the middle two.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty list");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Inclusive interpolated quantile: position `(n - 1) q` in the sorted list,
/// linear between neighbours.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty list");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (v.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        v[lo]
    } else {
        v[lo] + (v[hi] - v[lo]) * frac
    }
}

/// `Q3 - Q1`; for three values `[a, b, c]` this is `(c - a) / 2`.
pub fn iqr(values: &[f64]) -> f64 {
    quantile(values, 0.75) - quantile(values, 0.25)
}

pub fn summarize(config: &ExperimentConfig, fold_accuracies: Vec<f64>) -> CvSummary {
    CvSummary {
        median: median(&fold_accuracies),
        iqr: iqr(&fold_accuracies),
        fold_accuracies,
        seed: config.seed,
        config_hash: format!("{:016x}", config.hash()),
        config: config.echo(),
    }
}

/// The three splits of one fold: test by `test_fraction`, then dev from the
/// rest by `dev_fraction`.
pub fn fold_splits(config: &ExperimentConfig, corpus: &Corpus, fold: usize) -> Result<(Corpus, Corpus, Corpus)> {
    let fold_seed = derive_seed(config.seed, fold as u64);
    let (rest, test) = shuffle_split(corpus, config.test_fraction, fold_seed)?;
    let (train, dev) = shuffle_split(&rest, config.dev_fraction, derive_seed(fold_seed, 1))?;
    Ok((train, dev, test))
}

/// Shuffle-split cross-validation. Fold `i` trains with seed
/// `derive_seed(seed, i)` and contributes the test accuracy of its best-dev
/// checkpoint.
pub fn cross_validate(
    config: &ExperimentConfig,
    table: &EmbeddingTable,
    corpus: &Corpus,
) -> Result<(CvSummary, Vec<RunReport>)> {
    config.validate()?;
    let mut reports = Vec::with_capacity(config.cv_folds);
    for fold in 0..config.cv_folds {
        let (train, dev, test) = fold_splits(config, corpus, fold)?;
        let fold_config = ExperimentConfig {
            seed: derive_seed(config.seed, fold as u64),
            ..config.clone()
        };
        let (_, report) = train_run(&fold_config, table, &train, &dev, &test)?;
        log::info!("fold {fold}: test accuracy {:.4}", report.test_accuracy);
        reports.push(report);
    }
    let accs = reports.iter().map(|r| r.test_accuracy).collect();
    Ok((summarize(config, accs), reports))
}

fn config_key(s: &CvSummary) -> String {
    s.config.iter().map(|(k, v)| format!("{k}={v};")).collect()
}

/// Highest median first, then lower IQR, then lexicographic config.
pub fn rank(summaries: &mut [CvSummary]) {
    summaries.sort_by(|a, b| {
        b.median
            .total_cmp(&a.median)
            .then(a.iqr.total_cmp(&b.iqr))
            .then_with(|| config_key(a).cmp(&config_key(b)))
            .then(Ordering::Equal)
    });
}

/// Cross-validates every point of the grid and returns the full ranked
/// table. `threads` caps concurrency (default: one per core).
pub fn sweep(
    grid_text: &str,
    base: &ExperimentConfig,
    table: &EmbeddingTable,
    corpus: &Corpus,
    threads: Option<usize>,
) -> Result<Vec<CvSummary>> {
    let grid = parse_grid(grid_text)?;
    let configs = grid.expand(base)?;
    if configs.is_empty() {
        return Err(Error::Config("grid expands to no configurations".into()));
    }
    log::info!("sweep over {} configuration(s)", configs.len());
    let run = || -> Result<Vec<CvSummary>> {
        configs
            .par_iter()
            .map(|c| cross_validate(c, table, corpus).map(|(s, _)| s))
            .collect()
    };
    let mut summaries = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    rank(&mut summaries);
    Ok(summaries)
}
