use crate::error::{Error, Result};
use crate::nncore::init::glorot_uniform;
use crate::nncore::ops::{
    affine, affine_backward, conv1d_over_time, conv1d_over_time_backward, dropout, dropout_backward, max_over_time,
    max_over_time_backward, relu, relu_backward,
};
use crate::nncore::{Parameter, RngStream, Tensor};

/// Convolution bank over frozen embeddings followed by a linear layer.
#[derive(Debug, Clone)]
pub struct TextCnn {
    pub filter_sizes: Vec<usize>,
    pub num_filters: usize,
    pub dropout_keep: f64,
    /// Pool only over windows that end inside the real tokens.
    pub masked_pooling: bool,
    /// `[w, d, f]` per filter size.
    pub filters: Vec<Parameter>,
    pub biases: Vec<Parameter>,
    pub out_w: Parameter,
    pub out_b: Parameter,
}

#[derive(Debug, Clone)]
pub struct CnnCache {
    x: Tensor,
    pre: Vec<Tensor>,
    argmax: Vec<Vec<usize>>,
    mask: Option<Vec<f32>>,
    features: Tensor,
}

impl TextCnn {
    pub fn new(
        filter_sizes: &[usize],
        num_filters: usize,
        embedding_dim: usize,
        num_classes: usize,
        dropout_keep: f64,
        rng: &mut RngStream,
    ) -> Self {
        let mut filters = Vec::new();
        let mut biases = Vec::new();
        for &w in filter_sizes {
            let mut t = Tensor::zeros(&[w, embedding_dim, num_filters]);
            glorot_uniform(&mut t, w * embedding_dim, num_filters, rng);
            filters.push(Parameter::new(format!("conv.w{w}.filters"), t));
            biases.push(Parameter::zeros(format!("conv.w{w}.bias"), &[num_filters]));
        }
        let width = filter_sizes.len() * num_filters;
        let mut w = Tensor::zeros(&[width, num_classes]);
        glorot_uniform(&mut w, width, num_classes, rng);
        Self {
            filter_sizes: filter_sizes.to_vec(),
            num_filters,
            dropout_keep,
            masked_pooling: false,
            filters,
            biases,
            out_w: Parameter::new("out.w", w).regularized(),
            out_b: Parameter::zeros("out.b", &[num_classes]),
        }
    }

    /// Width of the concatenated pooled features.
    pub fn feature_width(&self) -> usize {
        self.filter_sizes.len() * self.num_filters
    }

    /// Max-pooled feature vector per example, before dropout.
    pub fn pooled_features(&self, x: &Tensor, lengths: &[usize]) -> Result<Tensor> {
        Ok(self.pool(x, lengths)?.0)
    }

    fn pool(&self, x: &Tensor, lengths: &[usize]) -> Result<(Tensor, Vec<Tensor>, Vec<Vec<usize>>)> {
        let n = x.dim(0);
        let f = self.num_filters;
        let width = self.feature_width();
        let mut features = Tensor::zeros(&[n, width]);
        let mut pre_all = Vec::with_capacity(self.filter_sizes.len());
        let mut argmax_all = Vec::with_capacity(self.filter_sizes.len());
        for (k, (filt, bias)) in self.filters.iter().zip(&self.biases).enumerate() {
            let pre = conv1d_over_time(x, &filt.value, &bias.value)?;
            let mut act = relu(&pre);
            if self.masked_pooling {
                let steps = act.dim(1);
                let w = self.filter_sizes[k];
                for (i, &len) in lengths.iter().enumerate() {
                    let valid = (len.saturating_sub(w) + 1).min(steps);
                    let row = &mut act.data_mut()[i * steps * f..(i + 1) * steps * f];
                    row[valid * f..].fill(f32::NEG_INFINITY);
                }
            }
            let (pooled, argmax) = max_over_time(&act)?;
            for i in 0..n {
                features.row_mut(i)[k * f..(k + 1) * f].copy_from_slice(pooled.row(i));
            }
            pre_all.push(pre);
            argmax_all.push(argmax);
        }
        Ok((features, pre_all, argmax_all))
    }

    pub fn forward(
        &self,
        x: &Tensor,
        lengths: &[usize],
        training: bool,
        rng: &mut RngStream,
    ) -> Result<(Tensor, CnnCache)> {
        if lengths.len() != x.dim(0) {
            return Err(Error::shape("text_cnn", "one length per example"));
        }
        let (pooled, pre, argmax) = self.pool(x, lengths)?;
        let (features, mask) = dropout(&pooled, self.dropout_keep, training, rng)?;
        let logits = affine(&features, &self.out_w.value, &self.out_b.value)?;
        Ok((
            logits,
            CnnCache {
                x: x.clone(),
                pre,
                argmax,
                mask,
                features,
            },
        ))
    }

    pub fn backward(&mut self, cache: &CnnCache, grad_logits: &Tensor) -> Result<()> {
        let d_features = affine_backward(
            &cache.features,
            &self.out_w.value,
            grad_logits,
            &mut self.out_w.grad,
            &mut self.out_b.grad,
        )?;
        let d_pooled = dropout_backward(cache.mask.as_deref(), &d_features);
        let n = d_pooled.dim(0);
        let f = self.num_filters;
        for k in 0..self.filter_sizes.len() {
            let mut g = Tensor::zeros(&[n, f]);
            for i in 0..n {
                g.row_mut(i).copy_from_slice(&d_pooled.row(i)[k * f..(k + 1) * f]);
            }
            let steps = cache.pre[k].dim(1);
            let d_act = max_over_time_backward(&cache.argmax[k], steps, &g);
            let d_pre = relu_backward(&cache.pre[k], &d_act);
            let (filt, bias) = (&mut self.filters[k], &mut self.biases[k]);
            conv1d_over_time_backward(&cache.x, &filt.value, &d_pre, &mut filt.grad, &mut bias.grad, false)?;
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out: Vec<&Parameter> = Vec::new();
        for (f, b) in self.filters.iter().zip(&self.biases) {
            out.push(f);
            out.push(b);
        }
        out.push(&self.out_w);
        out.push(&self.out_b);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = Vec::new();
        for (f, b) in self.filters.iter_mut().zip(self.biases.iter_mut()) {
            out.push(f);
            out.push(b);
        }
        out.push(&mut self.out_w);
        out.push(&mut self.out_b);
        out
    }
}
