//! The same model trained once on three classes and once with the neutral
//! class removed.
//!
//! cargo run --release --example binary_vs_ternary

use agrisent::experiments::{binary_ternary_comparison, ExperimentConfig};
use agrisent::synthetic::{generate, NeutralMode, SyntheticSpec};

fn main() -> agrisent::Result<()> {
    for seed in [1, 2, 3] {
        let data = generate(&SyntheticSpec {
            neutral: NeutralMode::PolarMixture,
            seed,
            ..SyntheticSpec::default()
        })?;
        let config = ExperimentConfig {
            epochs: 20,
            seed,
            ..ExperimentConfig::default()
        };
        let cmp = binary_ternary_comparison(&config, &data.table, &data.corpus)?;
        println!(
            "seed {seed}: ternary {:.3} ({} test), binary {:.3} ({} test)",
            cmp.ternary.test_accuracy, cmp.ternary.test_size, cmp.binary.test_accuracy, cmp.binary.test_size
        );
    }
    Ok(())
}
