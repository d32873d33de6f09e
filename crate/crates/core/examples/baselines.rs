//! Logistic regression, linear SVM and a one-hidden-layer network on
//! sentence-average embedding features.
//!
//! cargo run --release --example baselines

use agrisent::embeddings::featurize;
use agrisent::models::{
    average_feature_matrix, predict_features, train_baseline, BaselineTraining, ModelKind,
};
use agrisent::synthetic::{gaussian_blobs, generate, SyntheticSpec};

fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    predicted.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / labels.len() as f64
}

fn main() -> agrisent::Result<()> {
    let data = generate(&SyntheticSpec::default())?;
    let examples = featurize(&data.corpus, &data.table, 52)?;
    let refs: Vec<_> = examples.iter().collect();
    let features = average_feature_matrix(&refs, &data.table);
    let labels = data.corpus.labels();
    let majority = *data.corpus.class_counts().iter().max().unwrap_or(&0) as f64 / labels.len() as f64;
    println!("majority class {majority:.3}");

    let opts = BaselineTraining::default();
    for kind in [ModelKind::LogReg, ModelKind::LinearSVM, ModelKind::DenseNN] {
        let model = train_baseline(kind, &features, &labels, &opts)?;
        let (predicted, _) = predict_features(&model, &features)?;
        println!("{kind:<10} train accuracy {:.3}", accuracy(&predicted, &labels));
    }

    let (blobs, blob_labels) = gaussian_blobs(3, 40, 10, 6.0, 5);
    for kind in [ModelKind::LogReg, ModelKind::LinearSVM] {
        let model = train_baseline(kind, &blobs, &blob_labels, &opts)?;
        let (predicted, _) = predict_features(&model, &blobs)?;
        println!("{kind:<10} on separable blobs {:.3}", accuracy(&predicted, &blob_labels));
    }
    Ok(())
}
