//! Train on a source domain while drawing part of the validation set from
//! the target domain, for several infusion fractions.
//!
//! cargo run --release --example validation_infusion

use agrisent::corpus::{Corpus, LabeledExample, Source};
use agrisent::experiments::{infusion_run, ExperimentConfig};
use agrisent::synthetic::{generate, NeutralMode, SyntheticSpec};

fn retag(corpus: Corpus, source: Source) -> agrisent::Result<Corpus> {
    let scheme = corpus.scheme();
    let examples: Vec<LabeledExample> = corpus
        .into_examples()
        .into_iter()
        .map(|mut e| {
            e.source = source;
            e
        })
        .collect();
    Corpus::new(scheme, examples)
}

fn main() -> agrisent::Result<()> {
    // The target domain expresses neutrality by mixing polar keywords.
    let source = generate(&SyntheticSpec {
        examples: 600,
        seed: 11,
        ..SyntheticSpec::default()
    })?;
    let target = generate(&SyntheticSpec {
        examples: 300,
        neutral: NeutralMode::PolarMixture,
        seed: 12,
        ..SyntheticSpec::default()
    })?;
    let source_corpus = retag(source.corpus, Source::GD)?;
    let target_corpus = retag(target.corpus, Source::AG)?;

    println!("fraction  val_from_target  train  val  test  test_acc");
    for fraction in [0.0, 0.25, 0.5, 1.0] {
        let config = ExperimentConfig {
            infusion_fraction: fraction,
            val_size: 60,
            epochs: 12,
            ..ExperimentConfig::default()
        };
        let (_, report) = infusion_run(&config, &source.table, &source_corpus, &target_corpus)?;
        let info = report.infusion.as_ref().expect("infusion run");
        println!(
            "{:>8.2}  {:>15}  {:>5}  {:>3}  {:>4}  {:.3}",
            fraction, info.val_from_target, info.train_size, info.val_size, info.test_size, report.test_accuracy
        );
    }
    Ok(())
}
