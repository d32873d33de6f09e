//! Seeded synthetic corpora with planted sentiment keywords.
//!
//! The generator:
//! - vocabulary `w00 .. w{V-1}`; class `c` owns keywords
//!   `w{c*K} .. w{c*K+K-1}`, every other word is filler;
//! - classes are assigned round-robin (balanced) and the example order is
//!   shuffled;
//! - each example has a length drawn uniformly from `[min_tokens,
//!   max_tokens]`, of which a uniform `[min_keywords, max_keywords]`
//!   positions hold keywords of its class and the rest hold filler words;
//! - in [`NeutralMode::PolarMixture`] the neutral class has no keywords of
//!   its own: each of its keyword slots is a negative or a positive keyword
//!   with probability 1/2;
//! - exactly `round(label_noise * n)` examples, chosen uniformly, get their
//!   label replaced by a different class chosen uniformly;
//! - the embedding table gives every word an independent `N(0, 0.5^2)`
//!   vector.

use crate::corpus::{dedup, round_half_up, Corpus, LabeledExample, Scheme, SentimentLabel, Source};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nncore::{derive_seed, Purpose, RngStream, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeutralMode {
    /// Neutral has its own planted keywords like the other classes.
    Planted,
    /// Neutral examples mix negative and positive keywords 50/50.
    PolarMixture,
}

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub examples: usize,
    pub vocab_size: usize,
    pub keywords_per_class: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub min_keywords: usize,
    pub max_keywords: usize,
    pub label_noise: f64,
    pub neutral: NeutralMode,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// 300 ternary examples over 60 words, 5 keywords per class, 8-20
    /// tokens, 2-4 keywords per example, 10% label noise, 50-d vectors.
    fn default() -> Self {
        Self {
            examples: 300,
            vocab_size: 60,
            keywords_per_class: 5,
            min_tokens: 8,
            max_tokens: 20,
            min_keywords: 2,
            max_keywords: 4,
            label_noise: 0.1,
            neutral: NeutralMode::Planted,
            embedding_dim: 50,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub corpus: Corpus,
    pub table: EmbeddingTable,
    /// Indices (into `corpus`) of the examples whose label was flipped.
    pub noisy: Vec<usize>,
}

fn word(i: usize) -> String {
    format!("w{i:02}")
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    let classes = 3;
    let k = spec.keywords_per_class;
    if classes * k >= spec.vocab_size {
        return Err(Error::InvalidArgument(format!(
            "{} keywords leave no filler in a vocabulary of {}",
            classes * k,
            spec.vocab_size
        )));
    }
    if spec.min_tokens == 0
        || spec.min_tokens > spec.max_tokens
        || spec.min_keywords > spec.max_keywords
        || spec.max_keywords > spec.min_tokens
    {
        return Err(Error::InvalidArgument("inconsistent token/keyword ranges".into()));
    }
    let mut rng = RngStream::new(spec.seed, Purpose::Split);
    let fillers: Vec<usize> = (classes * k..spec.vocab_size).collect();
    let mut classes_in_order: Vec<usize> = (0..spec.examples).map(|i| i % classes).collect();
    rng.shuffle(&mut classes_in_order);

    let mut examples = Vec::with_capacity(spec.examples);
    for &class in &classes_in_order {
        let len = spec.min_tokens + rng.below(spec.max_tokens - spec.min_tokens + 1);
        let n_kw = spec.min_keywords + rng.below(spec.max_keywords - spec.min_keywords + 1);
        let mut words: Vec<usize> = (0..len).map(|_| fillers[rng.below(fillers.len())]).collect();
        let positions = rng.permutation(len);
        for &pos in positions.iter().take(n_kw) {
            let owner = match (spec.neutral, class) {
                (NeutralMode::PolarMixture, 1) => {
                    if rng.uniform() < 0.5 {
                        0
                    } else {
                        2
                    }
                }
                _ => class,
            };
            words[pos] = owner * k + rng.below(k);
        }
        examples.push(LabeledExample::new(
            words.into_iter().map(word).collect(),
            SentimentLabel::new(Scheme::Ternary, class)?,
            Source::SYN,
        ));
    }

    let n_noisy = round_half_up(spec.label_noise * spec.examples as f64).min(spec.examples);
    let mut noisy: Vec<usize> = rng.permutation(spec.examples).into_iter().take(n_noisy).collect();
    noisy.sort_unstable();
    for &i in &noisy {
        let old = examples[i].label.value();
        let new = (old + 1 + rng.below(classes - 1)) % classes;
        examples[i].label = SentimentLabel::new(Scheme::Ternary, new)?;
    }
    let before = examples.len();
    let corpus = dedup(Corpus::new(Scheme::Ternary, examples)?);
    if corpus.len() != before {
        // only possible for tiny vocabularies; indices in `noisy` would shift
        return Err(Error::InvalidArgument("generator produced duplicate examples".into()));
    }

    let mut vec_rng = RngStream::new(derive_seed(spec.seed, 1), Purpose::Init);
    let entries = (0..spec.vocab_size)
        .map(|i| {
            let v = (0..spec.embedding_dim).map(|_| (0.5 * vec_rng.normal()) as f32).collect();
            (word(i), v)
        })
        .collect();
    Ok(SyntheticData {
        corpus,
        table: EmbeddingTable::from_vectors(spec.embedding_dim, entries)?,
        noisy,
    })
}

/// Two or more Gaussian blobs in `dim` dimensions, `per_class` points each,
/// class means `separation` apart along orthogonal axes, unit variance.
/// Returns the `[n, dim]` feature matrix and the labels.
pub fn gaussian_blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> (Tensor<f32>, Vec<usize>) {
    assert!(classes <= dim, "one axis per class");
    let mut rng = RngStream::new(seed, Purpose::Split);
    let n = classes * per_class;
    let mut x = Tensor::zeros(&[n, dim]);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        labels.push(c);
        let row = x.row_mut(i);
        for (j, v) in row.iter_mut().enumerate() {
            let mean = if j == c { separation / std::f64::consts::SQRT_2 } else { 0.0 };
            *v = (mean + rng.normal()) as f32;
        }
    }
    (x, labels)
}
