use crate::error::Result;
use crate::nncore::init::glorot_uniform;
use crate::nncore::ops::{affine, affine_backward, dropout, dropout_backward};
use crate::nncore::rnn::RnnCache;
use crate::nncore::{run_rnn, run_rnn_backward, CellKind, Parameter, RngStream, RnnStack, Tensor};

/// Recurrent encoder (GRU or LSTM, optionally bidirectional and stacked)
/// followed by a linear layer on the final state.
#[derive(Debug, Clone)]
pub struct RnnClassifier {
    pub stack: RnnStack,
    pub dropout_keep: f64,
    pub out_w: Parameter,
    pub out_b: Parameter,
}

#[derive(Debug, Clone)]
pub struct RnnClassifierCache {
    rnn: RnnCache<f32>,
    mask: Option<Vec<f32>>,
    rep: Tensor,
}

impl RnnClassifier {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cell: CellKind,
        embedding_dim: usize,
        hidden: usize,
        bidirectional: bool,
        num_layers: usize,
        num_classes: usize,
        dropout_keep: f64,
        rng: &mut RngStream,
    ) -> Self {
        let stack = RnnStack::init(cell, embedding_dim, hidden, bidirectional, num_layers, rng);
        let width = stack.output_width();
        let mut w = Tensor::zeros(&[width, num_classes]);
        glorot_uniform(&mut w, width, num_classes, rng);
        Self {
            stack,
            dropout_keep,
            out_w: Parameter::new("out.w", w),
            out_b: Parameter::zeros("out.b", &[num_classes]),
        }
    }

    pub fn representation_width(&self) -> usize {
        self.stack.output_width()
    }

    /// Empty examples are read as a single pad step.
    fn clamp(lengths: &[usize]) -> Vec<usize> {
        lengths.iter().map(|&l| l.max(1)).collect()
    }

    pub fn forward(
        &self,
        x: &Tensor,
        lengths: &[usize],
        training: bool,
        rng: &mut RngStream,
    ) -> Result<(Tensor, RnnClassifierCache)> {
        let (rep, rnn) = run_rnn(x, &Self::clamp(lengths), &self.stack)?;
        let (rep, mask) = dropout(&rep, self.dropout_keep, training, rng)?;
        let logits = affine(&rep, &self.out_w.value, &self.out_b.value)?;
        Ok((logits, RnnClassifierCache { rnn, mask, rep }))
    }

    pub fn backward(&mut self, cache: &RnnClassifierCache, grad_logits: &Tensor) -> Result<()> {
        let d_rep = affine_backward(
            &cache.rep,
            &self.out_w.value,
            grad_logits,
            &mut self.out_w.grad,
            &mut self.out_b.grad,
        )?;
        let d_rep = dropout_backward(cache.mask.as_deref(), &d_rep);
        run_rnn_backward(&mut self.stack, &cache.rnn, &d_rep, false)?;
        Ok(())
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = self.stack.params();
        out.push(&self.out_w);
        out.push(&self.out_b);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.stack.params_mut();
        out.push(&mut self.out_w);
        out.push(&mut self.out_b);
        out
    }
}
