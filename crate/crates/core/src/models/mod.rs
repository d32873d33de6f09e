//! The model zoo: text CNN, recurrent classifiers and the sentence-average
//! baselines, plus inference and the binary model file.

mod baseline;
mod cnn;
mod io;
mod recurrent;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use baseline::{average_feature_matrix, sentence_average_features, DenseCache, DenseModel, LinearModel};
pub use cnn::{CnnCache, TextCnn};
pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_FORMAT_VERSION};
pub use recurrent::{RnnClassifier, RnnClassifierCache};

use crate::embeddings::{EmbeddingTable, FeaturizedExample, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::nncore::ops::{one_vs_rest_hinge, softmax, softmax_cross_entropy, LossOutput};
use crate::nncore::{l2_penalty_backward, CellKind, Optimizer, OptimizerKind, Parameter, Purpose, RngStream, Tensor};

/// Depth used when a multi-layer recurrent model is requested.
pub const MULTI_LAYER_DEPTH: usize = 2;
pub const DEFAULT_DENSE_HIDDEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    TextCNN,
    RNN,
    LogReg,
    LinearSVM,
    DenseNN,
}

impl ModelKind {
    pub fn is_baseline(self) -> bool {
        matches!(self, ModelKind::LogReg | ModelKind::LinearSVM | ModelKind::DenseNN)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::TextCNN => "textcnn",
            ModelKind::RNN => "rnn",
            ModelKind::LogReg => "logreg",
            ModelKind::LinearSVM => "linearsvm",
            ModelKind::DenseNN => "densenn",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "textcnn" | "cnn" => Ok(ModelKind::TextCNN),
            "rnn" => Ok(ModelKind::RNN),
            "logreg" => Ok(ModelKind::LogReg),
            "linearsvm" | "svm" => Ok(ModelKind::LinearSVM),
            "densenn" | "dense" => Ok(ModelKind::DenseNN),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

pub fn parse_cell(s: &str) -> Result<CellKind> {
    match s.trim().to_ascii_lowercase().as_str() {
        "gru" => Ok(CellKind::Gru),
        "lstm" => Ok(CellKind::Lstm),
        other => Err(Error::Config(format!("unknown cell '{other}'"))),
    }
}

pub fn cell_name(c: CellKind) -> &'static str {
    match c {
        CellKind::Gru => "gru",
        CellKind::Lstm => "lstm",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub cell: Option<CellKind>,
    pub bidirectional: bool,
    pub num_layers: usize,
    pub hidden_size: usize,
    pub filter_sizes: Vec<usize>,
    pub num_filters_per_size: usize,
    pub num_classes: usize,
    pub dropout_keep: f64,
    pub l2_lambda: f64,
    pub dense_hidden: usize,
    pub masked_pooling: bool,
}

impl Default for ModelSpec {
    /// The tuned CNN: filter sizes 1,2,3,4,5,10 with 64 filters each and
    /// dropout keep probability 0.5, three classes.
    fn default() -> Self {
        Self {
            kind: ModelKind::TextCNN,
            cell: None,
            bidirectional: false,
            num_layers: 1,
            hidden_size: 300,
            filter_sizes: vec![1, 2, 3, 4, 5, 10],
            num_filters_per_size: 64,
            num_classes: 3,
            dropout_keep: 0.5,
            l2_lambda: 0.0,
            dense_hidden: DEFAULT_DENSE_HIDDEN,
            masked_pooling: false,
        }
    }
}

impl ModelSpec {
    /// One of the eight recurrent variants: {GRU, LSTM} x {uni, bi} x
    /// {single, multi-layer}.
    pub fn rnn(cell: CellKind, bidirectional: bool, multi_layer: bool, hidden: usize) -> Self {
        Self {
            kind: ModelKind::RNN,
            cell: Some(cell),
            bidirectional,
            num_layers: if multi_layer { MULTI_LAYER_DEPTH } else { 1 },
            hidden_size: hidden,
            ..Self::default()
        }
    }

    pub fn baseline(kind: ModelKind) -> Self {
        Self {
            kind,
            dropout_keep: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self, max_len: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.num_classes == 2 || self.num_classes == 3) {
            return bad(format!("num_classes must be 2 or 3, got {}", self.num_classes));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return bad(format!("dropout_keep {} not in (0, 1]", self.dropout_keep));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad(format!("l2_lambda {} must be non-negative", self.l2_lambda));
        }
        match self.kind {
            ModelKind::TextCNN => {
                if self.filter_sizes.is_empty() || self.filter_sizes.contains(&0) {
                    return bad("filter_sizes must be non-empty positive integers".into());
                }
                let widest = *self.filter_sizes.iter().max().unwrap();
                if widest > max_len {
                    return bad(format!("filter size {widest} exceeds max_len {max_len}"));
                }
                if self.num_filters_per_size == 0 {
                    return bad("num_filters_per_size must be positive".into());
                }
            }
            ModelKind::RNN => {
                if self.cell.is_none() {
                    return bad("an RNN model needs a cell (gru or lstm)".into());
                }
                if self.num_layers == 0 || self.hidden_size == 0 {
                    return bad("num_layers and hidden_size must be positive".into());
                }
            }
            ModelKind::DenseNN if self.dense_hidden == 0 => {
                return bad("dense_hidden must be positive".into());
            }
            _ => {}
        }
        Ok(())
    }

    /// `key=value` lines, one per field, in a fixed order.
    pub fn echo(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("kind", self.kind.to_string());
        m.insert("cell", self.cell.map(cell_name).unwrap_or("none").to_string());
        m.insert("bidirectional", self.bidirectional.to_string());
        m.insert("num_layers", self.num_layers.to_string());
        m.insert("hidden_size", self.hidden_size.to_string());
        m.insert("filter_sizes", join(&self.filter_sizes));
        m.insert("num_filters_per_size", self.num_filters_per_size.to_string());
        m.insert("num_classes", self.num_classes.to_string());
        m.insert("dropout_keep", self.dropout_keep.to_string());
        m.insert("l2_lambda", self.l2_lambda.to_string());
        m.insert("dense_hidden", self.dense_hidden.to_string());
        m.insert("masked_pooling", self.masked_pooling.to_string());
        m
    }
}

pub(crate) fn join(xs: &[usize]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingRef {
    /// Content hash of the table; 0 when unknown.
    pub id: u64,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Fingerprint {
    pub config_hash: u64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum Network {
    TextCnn(TextCnn),
    Rnn(RnnClassifier),
    Linear(LinearModel),
    Dense(DenseModel),
}

/// What a network consumes for one batch.
#[derive(Debug, Clone)]
pub enum Inputs {
    /// `[n, max_len, dim]` embedded tokens and the real lengths.
    Sequence { x: Tensor, lengths: Vec<usize> },
    /// `[n, dim]` sentence-average features.
    Features(Tensor),
}

impl Inputs {
    pub fn rows(&self) -> usize {
        match self {
            Inputs::Sequence { x, .. } | Inputs::Features(x) => x.dim(0),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ForwardCache {
    Cnn(CnnCache),
    Rnn(RnnClassifierCache),
    Linear(Tensor),
    Dense(DenseCache),
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub network: Network,
    pub embedding: EmbeddingRef,
    pub max_len: usize,
    pub fingerprint: Fingerprint,
}

/// Builds an initialized model of any kind. Weights are drawn from the
/// `Init` stream of `seed`.
pub fn build_model(spec: &ModelSpec, embedding_dim: usize, max_len: usize, seed: u64) -> Result<TrainedModel> {
    spec.validate(max_len)?;
    if embedding_dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    let mut rng = RngStream::new(seed, Purpose::Init);
    let c = spec.num_classes;
    let network = match spec.kind {
        ModelKind::TextCNN => {
            let mut cnn = TextCnn::new(
                &spec.filter_sizes,
                spec.num_filters_per_size,
                embedding_dim,
                c,
                spec.dropout_keep,
                &mut rng,
            );
            cnn.masked_pooling = spec.masked_pooling;
            Network::TextCnn(cnn)
        }
        ModelKind::RNN => Network::Rnn(RnnClassifier::new(
            spec.cell.expect("validated"),
            embedding_dim,
            spec.hidden_size,
            spec.bidirectional,
            spec.num_layers,
            c,
            spec.dropout_keep,
            &mut rng,
        )),
        ModelKind::LogReg | ModelKind::LinearSVM => Network::Linear(LinearModel::new(embedding_dim, c)),
        ModelKind::DenseNN => Network::Dense(DenseModel::new(embedding_dim, spec.dense_hidden, c, &mut rng)),
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        network,
        embedding: EmbeddingRef {
            id: 0,
            dim: embedding_dim,
        },
        max_len,
        fingerprint: Fingerprint {
            config_hash: 0,
            seed,
        },
    })
}

pub fn build_text_cnn(spec: &ModelSpec, embedding_dim: usize, max_len: usize, seed: u64) -> Result<TrainedModel> {
    if spec.kind != ModelKind::TextCNN {
        return Err(Error::Config(format!("build_text_cnn called with kind {}", spec.kind)));
    }
    build_model(spec, embedding_dim, max_len, seed)
}

pub fn build_rnn_classifier(spec: &ModelSpec, embedding_dim: usize, max_len: usize, seed: u64) -> Result<TrainedModel> {
    if spec.kind != ModelKind::RNN {
        return Err(Error::Config(format!("build_rnn_classifier called with kind {}", spec.kind)));
    }
    build_model(spec, embedding_dim, max_len, seed)
}

impl TrainedModel {
    pub fn with_embedding(mut self, table: &EmbeddingTable) -> Self {
        self.embedding = EmbeddingRef {
            id: table.id(),
            dim: table.dim(),
        };
        self
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    /// Embeds (sequence models) or averages (baselines) a batch.
    pub fn inputs(&self, batch: &[&FeaturizedExample], table: &EmbeddingTable) -> Inputs {
        match self.network {
            Network::TextCnn(_) | Network::Rnn(_) => Inputs::Sequence {
                x: table.embed(batch),
                lengths: batch.iter().map(|e| e.length).collect(),
            },
            Network::Linear(_) | Network::Dense(_) => Inputs::Features(average_feature_matrix(batch, table)),
        }
    }

    pub fn forward(&self, inputs: &Inputs, training: bool, rng: &mut RngStream) -> Result<(Tensor, ForwardCache)> {
        match (&self.network, inputs) {
            (Network::TextCnn(m), Inputs::Sequence { x, lengths }) => {
                let (y, c) = m.forward(x, lengths, training, rng)?;
                Ok((y, ForwardCache::Cnn(c)))
            }
            (Network::Rnn(m), Inputs::Sequence { x, lengths }) => {
                let (y, c) = m.forward(x, lengths, training, rng)?;
                Ok((y, ForwardCache::Rnn(c)))
            }
            (Network::Linear(m), Inputs::Features(x)) => Ok((m.forward(x)?, ForwardCache::Linear(x.clone()))),
            (Network::Dense(m), Inputs::Features(x)) => {
                let (y, c) = m.forward(x)?;
                Ok((y, ForwardCache::Dense(c)))
            }
            _ => Err(Error::InvalidArgument("input kind does not match the network".into())),
        }
    }

    pub fn backward(&mut self, cache: &ForwardCache, grad_logits: &Tensor) -> Result<()> {
        match (&mut self.network, cache) {
            (Network::TextCnn(m), ForwardCache::Cnn(c)) => m.backward(c, grad_logits),
            (Network::Rnn(m), ForwardCache::Rnn(c)) => m.backward(c, grad_logits),
            (Network::Linear(m), ForwardCache::Linear(x)) => m.backward(x, grad_logits),
            (Network::Dense(m), ForwardCache::Dense(c)) => m.backward(c, grad_logits),
            _ => Err(Error::InvalidArgument("cache does not match the network".into())),
        }
    }

    /// Hinge loss for the linear SVM, softmax cross-entropy otherwise.
    pub fn loss(&self, logits: &Tensor, labels: &[usize]) -> Result<LossOutput<f32>> {
        match self.spec.kind {
            ModelKind::LinearSVM => one_vs_rest_hinge(logits, labels),
            _ => softmax_cross_entropy(logits, labels),
        }
    }

    pub fn params(&self) -> Vec<&Parameter> {
        match &self.network {
            Network::TextCnn(m) => m.params(),
            Network::Rnn(m) => m.params(),
            Network::Linear(m) => m.params(),
            Network::Dense(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        match &mut self.network {
            Network::TextCnn(m) => m.params_mut(),
            Network::Rnn(m) => m.params_mut(),
            Network::Linear(m) => m.params_mut(),
            Network::Dense(m) => m.params_mut(),
        }
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Copies parameter values from `other` (same architecture).
    pub fn load_values_from(&mut self, other: &TrainedModel) -> Result<()> {
        let src = other.params();
        let mut dst = self.params_mut();
        if src.len() != dst.len() {
            return Err(Error::ModelMismatch("parameter lists differ".into()));
        }
        for (d, s) in dst.iter_mut().zip(src) {
            if d.shape() != s.shape() {
                return Err(Error::ModelMismatch(format!("{} shape {:?} vs {:?}", d.name, d.shape(), s.shape())));
            }
            d.value = s.value.clone();
        }
        Ok(())
    }

    fn check_compatible(&self, table: &EmbeddingTable, batch: &[FeaturizedExample]) -> Result<()> {
        if table.dim() != self.embedding.dim {
            return Err(Error::ModelMismatch(format!(
                "embedding dimension {} but the model was trained with {}",
                table.dim(),
                self.embedding.dim
            )));
        }
        if let Some(e) = batch.iter().find(|e| e.indices.len() != self.max_len) {
            return Err(Error::ModelMismatch(format!(
                "example padded to {} but the model expects max_len {}",
                e.indices.len(),
                self.max_len
            )));
        }
        if self.embedding.id != 0 && table.id() != self.embedding.id {
            log::warn!("embedding table differs from the one the model was trained with");
        }
        Ok(())
    }

    /// Inference-mode logits.
    pub fn logits(&self, table: &EmbeddingTable, batch: &[FeaturizedExample]) -> Result<Tensor> {
        self.check_compatible(table, batch)?;
        let c = self.num_classes();
        let mut out = Vec::with_capacity(batch.len() * c);
        let mut rng = RngStream::new(0, Purpose::Dropout);
        for chunk in batch.chunks(256) {
            let refs: Vec<&FeaturizedExample> = chunk.iter().collect();
            let (logits, _) = self.forward(&self.inputs(&refs, table), false, &mut rng)?;
            out.extend_from_slice(logits.data());
        }
        Tensor::from_vec(&[batch.len(), c], out)
    }
}

/// Class index (argmax, lowest index on ties) and softmax probabilities per
/// example. Dropout is off.
pub fn predict(
    model: &TrainedModel,
    table: &EmbeddingTable,
    batch: &[FeaturizedExample],
) -> Result<(Vec<usize>, Tensor)> {
    let logits = model.logits(table, batch)?;
    let probs = softmax(&logits);
    Ok((probs.argmax_rows(), probs))
}

#[derive(Debug, Clone)]
pub struct BaselineTraining {
    pub num_classes: usize,
    pub l2_lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub dense_hidden: usize,
    pub optimizer: OptimizerKind,
}

impl Default for BaselineTraining {
    fn default() -> Self {
        Self {
            num_classes: 3,
            l2_lambda: 1e-4,
            lr: 1e-2,
            epochs: 200,
            seed: 42,
            dense_hidden: DEFAULT_DENSE_HIDDEN,
            optimizer: OptimizerKind::Adam,
        }
    }
}

/// Full-batch training of a baseline on precomputed `[n, d]` features.
pub fn train_baseline(
    kind: ModelKind,
    features: &Tensor,
    labels: &[usize],
    opts: &BaselineTraining,
) -> Result<TrainedModel> {
    if !kind.is_baseline() {
        return Err(Error::Config(format!("{kind} is not a baseline model")));
    }
    if features.rank() != 2 || features.dim(0) != labels.len() {
        return Err(Error::shape("train_baseline", "one label per feature row"));
    }
    let mut seen = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() < 2 {
        return Err(Error::InsufficientData("baseline training data has a single class".into()));
    }
    let spec = ModelSpec {
        num_classes: opts.num_classes,
        l2_lambda: opts.l2_lambda,
        dense_hidden: opts.dense_hidden,
        ..ModelSpec::baseline(kind)
    };
    let mut model = build_model(&spec, features.dim(1), DEFAULT_MAX_LEN, opts.seed)?;
    let inputs = Inputs::Features(features.clone());
    let mut optimizer = Optimizer::new(opts.optimizer, opts.lr);
    let mut rng = RngStream::new(opts.seed, Purpose::Dropout);
    for epoch in 0..opts.epochs {
        model.zero_grad();
        let (logits, cache) = model.forward(&inputs, true, &mut rng)?;
        let loss = model.loss(&logits, labels)?;
        if !loss.loss.is_finite() {
            return Err(Error::NonFinite(format!("baseline loss at epoch {epoch}")));
        }
        model.backward(&cache, &loss.grad)?;
        let mut params = model.params_mut();
        l2_penalty_backward(&mut params, opts.l2_lambda);
        optimizer.step(&mut params)?;
    }
    Ok(model)
}

/// Predictions of a baseline on precomputed features.
pub fn predict_features(model: &TrainedModel, features: &Tensor) -> Result<(Vec<usize>, Tensor)> {
    let mut rng = RngStream::new(0, Purpose::Dropout);
    let (logits, _) = model.forward(&Inputs::Features(features.clone()), false, &mut rng)?;
    let probs = softmax(&logits);
    Ok((probs.argmax_rows(), probs))
}
