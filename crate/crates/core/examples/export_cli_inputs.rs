//! Write a synthetic corpus, embedding file, config and grid to a directory
//! so every `agrisent` subcommand can be tried on them.
//!
//! cargo run --example export_cli_inputs -- /tmp/agrisent-demo

use std::path::PathBuf;

use agrisent::corpus::{shuffle_split, write_csv};
use agrisent::embeddings::write_embeddings;
use agrisent::synthetic::{generate, SyntheticSpec};

fn main() -> agrisent::Result<()> {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("agrisent-demo"));
    std::fs::create_dir_all(&dir).expect("output dir");

    let data = generate(&SyntheticSpec::default())?;
    let (rest, test) = shuffle_split(&data.corpus, 0.2, 1)?;
    let (train, dev) = shuffle_split(&rest, 0.1, 2)?;
    write_csv(&data.corpus, dir.join("all.csv"))?;
    write_csv(&train, dir.join("train.csv"))?;
    write_csv(&dev, dir.join("dev.csv"))?;
    write_csv(&test, dir.join("test.csv"))?;
    write_embeddings(&data.table, dir.join("glove.txt"))?;
    std::fs::write(dir.join("cnn.txt"), "kind = textcnn\nepochs = 10\n").expect("config");
    std::fs::write(dir.join("grid.txt"), "dropout_keep = 0.5, 1.0\nepochs = 5\ncv_folds = 2\n").expect("grid");
    println!("wrote inputs to {}", dir.display());
    Ok(())
}
