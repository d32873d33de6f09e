use crate::embeddings::{EmbeddingTable, FeaturizedExample};
use crate::error::Result;
use crate::nncore::init::glorot_uniform;
use crate::nncore::ops::{affine, affine_backward, relu, relu_backward};
use crate::nncore::{Parameter, RngStream, Tensor};

/// Mean of the embedding rows of the first `length` positions. Unknown words
/// contribute their zero row; an empty example gives the zero vector.
pub fn sentence_average_features(example: &FeaturizedExample, table: &EmbeddingTable) -> Vec<f32> {
    let mut out = vec![0.0f32; table.dim()];
    if example.length == 0 {
        return out;
    }
    for &idx in &example.indices[..example.length] {
        for (a, &b) in out.iter_mut().zip(table.row(idx)) {
            *a += b;
        }
    }
    let inv = 1.0 / example.length as f32;
    out.iter_mut().for_each(|v| *v *= inv);
    out
}

/// `[n, dim]` matrix of [`sentence_average_features`].
pub fn average_feature_matrix(batch: &[&FeaturizedExample], table: &EmbeddingTable) -> Tensor {
    let d = table.dim();
    let mut x = Tensor::zeros(&[batch.len(), d]);
    for (i, e) in batch.iter().enumerate() {
        x.row_mut(i).copy_from_slice(&sentence_average_features(e, table));
    }
    x
}

/// Single affine map from features to class scores (softmax regression or
/// one-vs-rest linear SVM depending on the loss).
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub w: Parameter,
    pub b: Parameter,
}

impl LinearModel {
    pub fn new(input: usize, num_classes: usize) -> Self {
        Self {
            w: Parameter::zeros("linear.w", &[input, num_classes]).regularized(),
            b: Parameter::zeros("linear.b", &[num_classes]),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        affine(x, &self.w.value, &self.b.value)
    }

    pub fn backward(&mut self, x: &Tensor, grad_scores: &Tensor) -> Result<()> {
        affine_backward(x, &self.w.value, grad_scores, &mut self.w.grad, &mut self.b.grad)?;
        Ok(())
    }

    pub fn params(&self) -> Vec<&Parameter> {
        vec![&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.w, &mut self.b]
    }
}

/// One relu hidden layer then softmax; both weight matrices regularized.
#[derive(Debug, Clone)]
pub struct DenseModel {
    pub w1: Parameter,
    pub b1: Parameter,
    pub w2: Parameter,
    pub b2: Parameter,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    x: Tensor,
    pre: Tensor,
    hidden: Tensor,
}

impl DenseModel {
    pub fn new(input: usize, hidden: usize, num_classes: usize, rng: &mut RngStream) -> Self {
        let mut w1 = Tensor::zeros(&[input, hidden]);
        glorot_uniform(&mut w1, input, hidden, rng);
        let mut w2 = Tensor::zeros(&[hidden, num_classes]);
        glorot_uniform(&mut w2, hidden, num_classes, rng);
        Self {
            w1: Parameter::new("dense.w1", w1).regularized(),
            b1: Parameter::zeros("dense.b1", &[hidden]),
            w2: Parameter::new("dense.w2", w2).regularized(),
            b2: Parameter::zeros("dense.b2", &[num_classes]),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, DenseCache)> {
        let pre = affine(x, &self.w1.value, &self.b1.value)?;
        let hidden = relu(&pre);
        let logits = affine(&hidden, &self.w2.value, &self.b2.value)?;
        Ok((
            logits,
            DenseCache {
                x: x.clone(),
                pre,
                hidden,
            },
        ))
    }

    pub fn backward(&mut self, cache: &DenseCache, grad_logits: &Tensor) -> Result<()> {
        let dh = affine_backward(&cache.hidden, &self.w2.value, grad_logits, &mut self.w2.grad, &mut self.b2.grad)?;
        let dpre = relu_backward(&cache.pre, &dh);
        affine_backward(&cache.x, &self.w1.value, &dpre, &mut self.w1.grad, &mut self.b1.grad)?;
        Ok(())
    }

    pub fn params(&self) -> Vec<&Parameter> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}
