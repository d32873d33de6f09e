//! Read a GloVe-format embedding file, map a corpus to row indices and
//! round-trip the FTZ1 feature cache.
//!
//! cargo run --example featurize

use agrisent::corpus::shuffle_split;
use agrisent::embeddings::{
    featurize, load_embeddings, read_feature_cache, write_embeddings, write_feature_cache,
};
use agrisent::synthetic::{generate, SyntheticSpec};

fn main() -> agrisent::Result<()> {
    let dir = std::env::temp_dir().join("agrisent-featurize");
    std::fs::create_dir_all(&dir).expect("temp dir");

    let data = generate(&SyntheticSpec::default())?;
    let glove = dir.join("vectors.txt");
    write_embeddings(&data.table, &glove)?;
    let table = load_embeddings(&glove)?;
    println!(
        "{} words, dim {}, unk row {}, pad row {}, id {:016x}",
        table.vocab_size(),
        table.dim(),
        table.unk_row(),
        table.pad_row(),
        table.id()
    );

    let (_, sample) = shuffle_split(&data.corpus, 0.05, 3)?;
    let max_len = 12;
    let examples = featurize(&sample, &table, max_len)?;
    for (e, f) in sample.examples().iter().zip(&examples).take(3) {
        println!("{} -> {:?} (length {})", e.text(), f.indices, f.length);
    }

    let cache = dir.join("sample.ftz");
    write_feature_cache(&cache, &examples, max_len, table.dim())?;
    let (header, back) = read_feature_cache(&cache)?;
    println!("{header:?}, identical: {}", back == examples);
    Ok(())
}
