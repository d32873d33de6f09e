//! Train the text CNN at its tuned settings on a synthetic keyword corpus
//! and print the per-epoch history.
//!
//! cargo run --release --example train_text_cnn

use agrisent::corpus::shuffle_split;
use agrisent::experiments::{train_run, ExperimentConfig};
use agrisent::synthetic::{generate, SyntheticSpec};

fn main() -> agrisent::Result<()> {
    let data = generate(&SyntheticSpec::default())?;
    let (rest, test) = shuffle_split(&data.corpus, 0.2, 1)?;
    let (train, dev) = shuffle_split(&rest, 0.1, 2)?;

    let config = ExperimentConfig {
        epochs: 30,
        ..ExperimentConfig::default()
    };
    let (_, report) = train_run(&config, &data.table, &train, &dev, &test)?;

    println!("epoch  train_loss  train_acc  dev_acc  seconds");
    for (i, h) in report.history.iter().enumerate() {
        let secs = if i == 0 { 0.0 } else { report.epoch_seconds[i - 1] };
        println!(
            "{:>5}  {:>10}  {:>9.3}  {:>7.3}  {:>7.3}",
            h.epoch,
            h.train_loss.map(|l| format!("{l:.4}")).unwrap_or_else(|| "-".into()),
            h.train_accuracy.unwrap_or(f64::NAN),
            h.dev_accuracy.unwrap_or(f64::NAN),
            secs
        );
    }
    println!(
        "best dev epoch {} ({:.3}); test accuracy {:.3} on {} examples",
        report.best_epoch, report.best_dev_accuracy, report.test_accuracy, report.test_size
    );
    println!("confusion (rows true, columns predicted): {:?}", report.test_confusion.counts);
    Ok(())
}
