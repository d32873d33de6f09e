//! Pretrained word vectors and fixed-length featurization.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::nncore::{Purpose, RngStream, Tensor};

/// Default padded input length.
pub const DEFAULT_MAX_LEN: usize = 52;

/// Vocabulary plus a dense `[vocab + 2, dim]` matrix. The two reserved rows
/// after the vocabulary are the unknown-word row and the padding row; both
/// are all zeros.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    word_index: HashMap<String, u32>,
    vectors: Vec<f32>,
    id: u64,
}

impl EmbeddingTable {
    /// Builds a table from parallel word/vector lists (first occurrence of
    /// a repeated word wins).
    pub fn from_vectors(dim: usize, entries: Vec<(String, Vec<f32>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        let mut words = Vec::with_capacity(entries.len());
        let mut word_index = HashMap::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity((entries.len() + 2) * dim);
        for (word, v) in entries {
            if v.len() != dim {
                return Err(Error::shape(
                    "embedding",
                    format!("vector for `{word}` has {} values, expected {dim}", v.len()),
                ));
            }
            if word_index.contains_key(&word) {
                continue;
            }
            word_index.insert(word.clone(), words.len() as u32);
            words.push(word);
            vectors.extend(v);
        }
        vectors.extend(std::iter::repeat_n(0.0, 2 * dim));
        let id = content_id(dim, &words, &vectors);
        Ok(Self {
            dim,
            words,
            word_index,
            vectors,
            id,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of real words (reserved rows excluded).
    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn unk_row(&self) -> u32 {
        self.words.len() as u32
    }

    pub fn pad_row(&self) -> u32 {
        self.words.len() as u32 + 1
    }

    /// Stable content hash, recorded in trained models.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn index_of(&self, word: &str) -> Option<u32> {
        self.word_index.get(word).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn row(&self, index: u32) -> &[f32] {
        let i = index as usize * self.dim;
        &self.vectors[i..i + self.dim]
    }

    pub fn lookup(&self, word: &str) -> Option<&[f32]> {
        self.index_of(word).map(|i| self.row(i))
    }

    /// Gathers rows into a `[n, max_len, dim]` tensor.
    pub fn embed(&self, batch: &[&FeaturizedExample]) -> Tensor<f32> {
        let max_len = batch.first().map(|e| e.indices.len()).unwrap_or(0);
        let mut out = Tensor::zeros(&[batch.len(), max_len, self.dim]);
        let data = out.data_mut();
        for (i, ex) in batch.iter().enumerate() {
            for (t, &idx) in ex.indices.iter().enumerate() {
                let off = (i * max_len + t) * self.dim;
                data[off..off + self.dim].copy_from_slice(self.row(idx));
            }
        }
        out
    }
}

fn content_id(dim: usize, words: &[String], vectors: &[f32]) -> u64 {
    let mut h = Sha256::new();
    h.update((dim as u64).to_le_bytes());
    for w in words {
        h.update((w.len() as u64).to_le_bytes());
        h.update(w.as_bytes());
    }
    for v in vectors {
        h.update(v.to_le_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Parses a GloVe-style text file: `word v1 v2 ... vD` per line.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    let mut dim = None;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = lineno as u64 + 1;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values = parts
            .map(|p| p.parse::<f32>())
            .collect::<std::result::Result<Vec<f32>, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                detail: format!("bad vector component for `{word}`: {e}"),
            })?;
        if values.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                detail: format!("`{word}` has no vector"),
            });
        }
        let d = *dim.get_or_insert(values.len());
        if values.len() != d {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                detail: format!("dimension {} differs from {d} on earlier lines", values.len()),
            });
        }
        entries.push((word.to_string(), values));
    }
    let dim = dim.ok_or(Error::Empty("embedding file"))?;
    EmbeddingTable::from_vectors(dim, entries)
}

/// Writes a table (reserved rows excluded) in the same text format.
pub fn write_embeddings(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for (i, word) in table.words().iter().enumerate() {
        let vals: Vec<String> = table.row(i as u32).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{word} {}", vals.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Word-row indices padded to a fixed length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeaturizedExample {
    pub indices: Vec<u32>,
    /// Real token count before padding, at most `indices.len()`.
    pub length: usize,
    pub label: usize,
}

/// Maps tokens to rows (unknown words to the unk row), truncates to
/// `max_len` and pads with the pad row.
pub fn featurize(corpus: &Corpus, table: &EmbeddingTable, max_len: usize) -> Result<Vec<FeaturizedExample>> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be at least 1".into()));
    }
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let mut truncated = 0usize;
    let out = corpus
        .examples()
        .iter()
        .map(|e| {
            let (indices, length) = featurize_tokens(&e.tokens, table, max_len);
            if e.tokens.len() > max_len {
                truncated += 1;
            }
            FeaturizedExample {
                indices,
                length,
                label: e.label.value(),
            }
        })
        .collect();
    if truncated > 0 {
        log::info!("{truncated} example(s) truncated to {max_len} tokens");
    }
    Ok(out)
}

/// Row indices and pre-padding length for one token list. An empty token
/// list yields length 0 (all padding).
pub fn featurize_tokens(tokens: &[String], table: &EmbeddingTable, max_len: usize) -> (Vec<u32>, usize) {
    let length = tokens.len().min(max_len);
    let mut indices: Vec<u32> = tokens[..length]
        .iter()
        .map(|t| table.index_of(t).unwrap_or(table.unk_row()))
        .collect();
    indices.resize(max_len, table.pad_row());
    (indices, length)
}

/// Consecutive batches after an optional seeded shuffle; the last batch may
/// be short.
pub fn make_batches(
    examples: &[FeaturizedExample],
    batch_size: usize,
    shuffle: bool,
    seed: u64,
) -> Vec<Vec<&FeaturizedExample>> {
    assert!(batch_size >= 1, "batch size must be positive");
    let mut order: Vec<usize> = (0..examples.len()).collect();
    if shuffle {
        RngStream::new(seed, Purpose::Shuffle).shuffle(&mut order);
    }
    order
        .chunks(batch_size)
        .map(|chunk| chunk.iter().map(|&i| &examples[i]).collect())
        .collect()
}

const CACHE_MAGIC: &[u8; 4] = b"FTZ1";

/// Header of a feature cache file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureCacheHeader {
    pub count: u32,
    pub max_len: u32,
    pub dim: u32,
}

/// `FTZ1`, then little-endian u32 count, max_len, embedding dim, then per
/// example u32 length, u32 label and `max_len` u32 indices.
pub fn write_feature_cache(
    path: impl AsRef<Path>,
    examples: &[FeaturizedExample],
    max_len: usize,
    dim: usize,
) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(16 + examples.len() * (8 + 4 * max_len));
    buf.extend_from_slice(CACHE_MAGIC);
    for v in [examples.len(), max_len, dim] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for e in examples {
        if e.indices.len() != max_len {
            return Err(Error::shape(
                "feature cache",
                format!("example has {} indices, max_len is {max_len}", e.indices.len()),
            ));
        }
        buf.extend_from_slice(&(e.length as u32).to_le_bytes());
        buf.extend_from_slice(&(e.label as u32).to_le_bytes());
        for &i in &e.indices {
            buf.extend_from_slice(&i.to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_feature_cache(path: impl AsRef<Path>) -> Result<(FeatureCacheHeader, Vec<FeaturizedExample>)> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let corrupt = |what: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        detail: format!("feature cache: {what}"),
    };
    if bytes.len() < 16 || &bytes[..4] != CACHE_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let mut words = bytes[4..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")));
    let mut next = || words.next().ok_or_else(|| corrupt("truncated"));
    let header = FeatureCacheHeader {
        count: next()?,
        max_len: next()?,
        dim: next()?,
    };
    let mut examples = Vec::with_capacity(header.count as usize);
    for _ in 0..header.count {
        let length = next()? as usize;
        let label = next()? as usize;
        let indices = (0..header.max_len).map(|_| next()).collect::<Result<Vec<_>>>()?;
        examples.push(FeaturizedExample {
            indices,
            length,
            label,
        });
    }
    if (bytes.len() - 4) % 4 != 0 || next().is_ok() {
        return Err(corrupt("trailing bytes"));
    }
    Ok((header, examples))
}
