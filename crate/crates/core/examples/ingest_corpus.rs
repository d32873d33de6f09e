//! Load a messy labeled CSV, inspect the ingestion counts and move the
//! labels between schemes.
//!
//! cargo run --example ingest_corpus

use agrisent::corpus::{
    class_distribution, load_csv, map_labels, temporal_split, LabelKind, LoadOptions, Scheme, Source,
};
use chrono::NaiveDate;

const ROWS: &str = "\
text,label,date,source
\"Wheat harvest looks GREAT this year!!\",4,2016-05-02,AG
corn prices are falling again,1,2016-06-11,AG
rain delayed planting,2,2016-07-20,AG
rain delayed planting,2,2016-07-21,AG
\"http://t.co/x @farmer\",3,2016-08-01,AG
soybeans look poor,0,not-a-date,AG
best yield ever,4,2016-09-15,KWT
";

fn main() -> agrisent::Result<()> {
    let dir = std::env::temp_dir().join("agrisent-ingest");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = dir.join("tweets.csv");
    std::fs::write(&path, ROWS).expect("write csv");

    let loaded = load_csv(&path, &LoadOptions::new(Source::AG, Scheme::Five, LabelKind::Integer))?;
    println!("{:?}", loaded.stats);
    for e in loaded.corpus.examples() {
        println!("{:<14} {:<4} {:?}", e.label.name(), e.source, e.tokens);
    }

    let ternary = map_labels(loaded.corpus, Scheme::Ternary)?;
    println!("ternary distribution {:?}", class_distribution(&ternary)?);
    let binary = map_labels(ternary.clone(), Scheme::Binary)?;
    println!("binary keeps {} of {} examples", binary.len(), ternary.len());

    let cutoff = NaiveDate::from_ymd_opt(2016, 7, 1).expect("date");
    let (before, after) = temporal_split(&ternary, cutoff, None)?;
    println!("before {cutoff}: {}, from {cutoff}: {}", before.len(), after.len());
    Ok(())
}
