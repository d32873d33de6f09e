//! Train a small CNN, save it, load it back and use it for predictions and
//! a misclassification listing.
//!
//! cargo run --release --example save_and_predict

use agrisent::corpus::{normalize_text, shuffle_split};
use agrisent::embeddings::{featurize_tokens, FeaturizedExample};
use agrisent::experiments::{misclassification_report, train_run, ExperimentConfig};
use agrisent::models::{load_model, model_to_bytes, predict, save_model};
use agrisent::synthetic::{generate, SyntheticSpec};

fn main() -> agrisent::Result<()> {
    let data = generate(&SyntheticSpec::default())?;
    let (rest, test) = shuffle_split(&data.corpus, 0.2, 1)?;
    let (train, dev) = shuffle_split(&rest, 0.1, 2)?;
    let config = ExperimentConfig {
        epochs: 15,
        ..ExperimentConfig::default()
    };
    let (model, report) = train_run(&config, &data.table, &train, &dev, &test)?;

    let path = std::env::temp_dir().join("agrisent-model.bin");
    save_model(&model, &path)?;
    let loaded = load_model(&path)?;
    println!(
        "saved {} parameters to {}; reload identical: {}",
        loaded.parameter_count(),
        path.display(),
        model_to_bytes(&loaded) == model_to_bytes(&model)
    );
    println!("test accuracy {:.3}", report.test_accuracy);

    let texts = ["w00 w01 w31 w40 w02", "w05 w33 w06 w45", "w10 w11 w12 w50 w51"];
    let batch: Vec<FeaturizedExample> = texts
        .iter()
        .map(|t| {
            let (indices, length) = featurize_tokens(&normalize_text(t), &data.table, loaded.max_len);
            FeaturizedExample {
                indices,
                length,
                label: 0,
            }
        })
        .collect();
    let (classes, probs) = predict(&loaded, &data.table, &batch)?;
    for (i, t) in texts.iter().enumerate() {
        println!("{t:<24} -> {} {:?}", test.scheme().class_name(classes[i]), probs.row(i));
    }

    println!("\nmost confident mistakes on test:");
    for m in misclassification_report(&loaded, &data.table, &test, 5)? {
        println!("{:.3}  {} -> {}  {}", m.probability, m.true_label, m.predicted_label, m.text);
    }
    Ok(())
}
