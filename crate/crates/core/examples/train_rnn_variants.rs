//! Train GRU and LSTM classifiers, one- and two-directional, one and two
//! layers, on the same synthetic split.
//!
//! cargo run --release --example train_rnn_variants

use agrisent::corpus::shuffle_split;
use agrisent::experiments::{median, train_run, ExperimentConfig};
use agrisent::models::ModelSpec;
use agrisent::nncore::CellKind;
use agrisent::synthetic::{generate, SyntheticSpec};

fn main() -> agrisent::Result<()> {
    let data = generate(&SyntheticSpec::default())?;
    let (rest, test) = shuffle_split(&data.corpus, 0.2, 1)?;
    let (train, dev) = shuffle_split(&rest, 0.1, 2)?;

    println!("cell  bi     layers  params  best_epoch  test_acc  s/epoch");
    for cell in [CellKind::Gru, CellKind::Lstm] {
        for bidirectional in [false, true] {
            for multi_layer in [false, true] {
                let config = ExperimentConfig {
                    model: ModelSpec::rnn(cell, bidirectional, multi_layer, 64),
                    lr: Some(3e-3),
                    epochs: 15,
                    ..ExperimentConfig::default()
                };
                let (model, report) = train_run(&config, &data.table, &train, &dev, &test)?;
                println!(
                    "{:<5} {:<6} {:>6}  {:>6}  {:>10}  {:>8.3}  {:>7.3}",
                    format!("{cell:?}").to_lowercase(),
                    bidirectional,
                    config.model.num_layers,
                    model.parameter_count(),
                    report.best_epoch,
                    report.test_accuracy,
                    median(&report.epoch_seconds)
                );
            }
        }
    }
    Ok(())
}
