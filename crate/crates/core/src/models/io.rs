//! Binary model file.
//!
//! Layout (little-endian):
//! ```text
//! "SAM1"  u16 version
//! u32 echo length, echo bytes (UTF-8 `key=value` lines)
//! repeated until end of file:
//!   u32 name length, name bytes, u8 rank, rank x u32 dims, f32 data
//! ```
//! The echo carries the model spec plus `embedding_dim`, `embedding_id`,
//! `max_len`, `config_hash` and `seed`. Parameters appear in the network's
//! canonical order.

use std::collections::BTreeMap;
use std::path::Path;

use super::{build_model, parse_cell, EmbeddingRef, Fingerprint, ModelKind, ModelSpec, TrainedModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SAM1";
pub const MODEL_FORMAT_VERSION: u16 = 1;

fn echo_text(model: &TrainedModel) -> String {
    let mut m: BTreeMap<&str, String> = model.spec.echo();
    m.insert("embedding_dim", model.embedding.dim.to_string());
    m.insert("embedding_id", model.embedding.id.to_string());
    m.insert("max_len", model.max_len.to_string());
    m.insert("config_hash", model.fingerprint.config_hash.to_string());
    m.insert("seed", model.fingerprint.seed.to_string());
    m.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn model_to_bytes(model: &TrainedModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    let echo = echo_text(model);
    out.extend_from_slice(&(echo.len() as u32).to_le_bytes());
    out.extend_from_slice(echo.as_bytes());
    for p in model.params() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.shape().len() as u8);
        for &d in p.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CorruptModel(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn parse_echo(text: &str) -> Result<BTreeMap<String, String>> {
    let mut m = BTreeMap::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::CorruptModel(format!("bad header line '{line}'")))?;
        m.insert(k.to_string(), v.to_string());
    }
    Ok(m)
}

fn field<T: std::str::FromStr>(m: &BTreeMap<String, String>, key: &str) -> Result<T> {
    m.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::CorruptModel(format!("header field '{key}' missing or invalid")))
}

fn spec_from_echo(m: &BTreeMap<String, String>) -> Result<ModelSpec> {
    let kind: ModelKind = m
        .get("kind")
        .ok_or_else(|| Error::CorruptModel("header field 'kind' missing".into()))?
        .parse()?;
    let cell = match m.get("cell").map(String::as_str) {
        None | Some("none") => None,
        Some(c) => Some(parse_cell(c)?),
    };
    let filter_sizes: Vec<usize> = match m.get("filter_sizes").map(String::as_str) {
        None | Some("") => Vec::new(),
        Some(s) => s
            .split(',')
            .map(|x| x.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::CorruptModel("header field 'filter_sizes' invalid".into()))?,
    };
    let spec = ModelSpec {
        kind,
        cell,
        bidirectional: field(m, "bidirectional")?,
        num_layers: field(m, "num_layers")?,
        hidden_size: field(m, "hidden_size")?,
        filter_sizes,
        num_filters_per_size: field(m, "num_filters_per_size")?,
        num_classes: field(m, "num_classes")?,
        dropout_keep: field(m, "dropout_keep")?,
        l2_lambda: field(m, "l2_lambda")?,
        dense_hidden: field(m, "dense_hidden")?,
        masked_pooling: field(m, "masked_pooling")?,
    };
    Ok(spec)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::CorruptModel("bad magic".into()));
    }
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().unwrap());
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelVersion {
            found: version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let echo_len = r.u32("header length")? as usize;
    let echo = std::str::from_utf8(r.take(echo_len, "header")?)
        .map_err(|_| Error::CorruptModel("header is not UTF-8".into()))?;
    let m = parse_echo(echo)?;
    let spec = spec_from_echo(&m)?;
    let dim: usize = field(&m, "embedding_dim")?;
    let max_len: usize = field(&m, "max_len")?;
    let mut model = build_model(&spec, dim, max_len, 0).map_err(|e| Error::CorruptModel(e.to_string()))?;
    model.embedding = EmbeddingRef {
        id: field(&m, "embedding_id")?,
        dim,
    };
    model.fingerprint = Fingerprint {
        config_hash: field(&m, "config_hash")?,
        seed: field(&m, "seed")?,
    };

    let mut params = model.params_mut();
    let expected = params.len();
    let mut seen = 0usize;
    while !r.done() {
        let name_len = r.u32("parameter name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "parameter name")?)
            .map_err(|_| Error::CorruptModel("parameter name is not UTF-8".into()))?;
        let rank = r.take(1, "rank")?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("dimension")? as usize);
        }
        let target = params
            .get_mut(seen)
            .ok_or_else(|| Error::ModelMismatch(format!("unexpected extra parameter '{name}'")))?;
        if target.name != name || target.shape() != dims.as_slice() {
            return Err(Error::ModelMismatch(format!(
                "parameter '{name}' {dims:?} where the spec implies '{}' {:?}",
                target.name,
                target.shape()
            )));
        }
        let count: usize = dims.iter().product();
        let raw = r.take(count * 4, "parameter data")?;
        for (v, chunk) in target.value.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        seen += 1;
    }
    if seen != expected {
        return Err(Error::CorruptModel(format!("{seen} of {expected} parameters present")));
    }
    Ok(model)
}
