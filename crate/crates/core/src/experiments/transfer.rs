use super::config::ExperimentConfig;
use super::cv::fold_splits;
use super::report::{InfusionInfo, RunReport};
use super::train::train_run;
use crate::corpus::{infuse_validation, map_labels, Corpus, InfusedSplit, Scheme};
use crate::embeddings::{featurize, EmbeddingTable};
use crate::error::{Error, Result};
use crate::models::{predict, TrainedModel};

/// Splits for an infusion run under `config`.
pub fn infusion_splits(config: &ExperimentConfig, source: &Corpus, target: &Corpus) -> Result<InfusedSplit> {
    infuse_validation(
        source,
        target,
        config.infusion_fraction,
        config.target_test_fraction,
        config.val_size,
        config.seed,
    )
}

/// Trains on `source` with a validation set partly drawn from `target`;
/// the rest of `target` is the test set.
pub fn infusion_run(
    config: &ExperimentConfig,
    table: &EmbeddingTable,
    source: &Corpus,
    target: &Corpus,
) -> Result<(TrainedModel, RunReport)> {
    let split = infusion_splits(config, source, target)?;
    let (model, mut report) = train_run(config, table, &split.train, &split.val, &split.test)?;
    report.infusion = Some(InfusionInfo {
        fraction: config.infusion_fraction,
        val_from_target: split.val_from_target,
        val_from_source: split.val_from_source,
        train_size: split.train.len(),
        val_size: split.val.len(),
        test_size: split.test.len(),
    });
    Ok((model, report))
}

#[derive(Debug, Clone)]
pub struct SchemeComparison {
    pub ternary: RunReport,
    pub binary: RunReport,
}

/// Trains the same config on a ternary corpus and on its binary mapping
/// (neutral removed). Both runs use the same seed and the same partition:
/// the binary splits are the ternary splits with neutral examples dropped.
pub fn binary_ternary_comparison(
    config: &ExperimentConfig,
    table: &EmbeddingTable,
    corpus: &Corpus,
) -> Result<SchemeComparison> {
    if corpus.scheme() != Scheme::Ternary {
        return Err(Error::MixedSchemes(format!("comparison needs a ternary corpus, got {}", corpus.scheme())));
    }
    let ternary_config = ExperimentConfig {
        scheme: Scheme::Ternary,
        ..config.clone()
    };
    let (train, dev, test) = fold_splits(&ternary_config, corpus, 0)?;
    let (_, ternary) = train_run(&ternary_config, table, &train, &dev, &test)?;

    let to_binary = |c: Corpus, name: &str| -> Result<Corpus> {
        let b = map_labels(c, Scheme::Binary)?;
        if b.class_counts().contains(&0) {
            return Err(Error::InsufficientData(format!("binary {name} split is missing a class")));
        }
        Ok(b)
    };
    let mut binary_config = ternary_config.clone();
    binary_config.scheme = Scheme::Binary;
    binary_config.model.num_classes = 2;
    let (_, binary) = train_run(
        &binary_config,
        table,
        &to_binary(train, "train")?,
        &to_binary(dev, "dev")?,
        &to_binary(test, "test")?,
    )?;
    Ok(SchemeComparison { ternary, binary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Misclassification {
    pub text: String,
    pub true_label: String,
    pub predicted_label: String,
    pub probability: f64,
}

/// Misclassified examples, most confident first, at most `n`.
pub fn misclassification_report(
    model: &TrainedModel,
    table: &EmbeddingTable,
    corpus: &Corpus,
    n: usize,
) -> Result<Vec<Misclassification>> {
    if corpus.is_empty() {
        return Ok(Vec::new());
    }
    let data = featurize(corpus, table, model.max_len)?;
    let (predicted, probs) = predict(model, table, &data)?;
    let scheme = corpus.scheme();
    let mut out: Vec<Misclassification> = corpus
        .examples()
        .iter()
        .zip(&predicted)
        .enumerate()
        .filter(|(_, (e, &p))| e.label.value() != p)
        .map(|(i, (e, &p))| Misclassification {
            text: e.text(),
            true_label: e.label.name().to_string(),
            predicted_label: scheme.class_name(p).to_string(),
            probability: probs.row(i)[p] as f64,
        })
        .collect();
    out.sort_by(|a, b| b.probability.total_cmp(&a.probability));
    out.truncate(n);
    Ok(out)
}
