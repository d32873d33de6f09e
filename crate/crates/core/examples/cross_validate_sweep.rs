//! Shuffle-split cross-validation of one config, then a small grid sweep
//! ranked by median accuracy and IQR.
//!
//! cargo run --release --example cross_validate_sweep

use agrisent::experiments::{cross_validate, sweep, ExperimentConfig};
use agrisent::synthetic::{generate, SyntheticSpec};

const GRID: &str = "\
# two filter-width sets times two dropout settings
filter_sizes = 1,2,3 | 3,4,5
dropout_keep = 0.5, 1.0
epochs = 8
";

fn main() -> agrisent::Result<()> {
    let data = generate(&SyntheticSpec::default())?;
    let base = ExperimentConfig {
        epochs: 8,
        ..ExperimentConfig::default()
    };

    let (summary, folds) = cross_validate(&base, &data.table, &data.corpus)?;
    for (i, r) in folds.iter().enumerate() {
        println!("fold {i}: best epoch {}, test {:.3}", r.best_epoch, r.test_accuracy);
    }
    println!("median {:.3}, IQR {:.3}", summary.median, summary.iqr);

    let ranked = sweep(GRID, &base, &data.table, &data.corpus, None)?;
    println!("\nrank  median  iqr     filter_sizes  dropout_keep");
    for (i, s) in ranked.iter().enumerate() {
        println!(
            "{:>4}  {:.3}   {:.3}   {:<12}  {}",
            i + 1,
            s.median,
            s.iqr,
            s.config["filter_sizes"],
            s.config["dropout_keep"]
        );
    }
    Ok(())
}
