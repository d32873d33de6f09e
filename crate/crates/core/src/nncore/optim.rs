//! Gradient clipping, L2 penalty and the parameter update rules.

use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use super::tensor::Parameter;
use crate::error::{Error, Result};

/// L2 norm over every gradient entry of every parameter, accumulated in f64.
pub fn global_grad_norm<F: Scalar>(params: &[&mut Parameter<F>]) -> f64 {
    params.iter().map(|p| p.grad.sum_squares()).sum::<f64>().sqrt()
}

/// Global-norm clipping: when the joint norm `g` exceeds `max_norm`, every
/// gradient is scaled by `max_norm / g`. Returns the pre-clip norm.
pub fn clip_gradients<F: Scalar>(params: &mut [&mut Parameter<F>], max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(Error::InvalidArgument(format!("max gradient norm {max_norm} must be positive")));
    }
    for p in params.iter() {
        p.grad.check_finite(&format!("gradient of {}", p.name))?;
    }
    let norm = global_grad_norm(params);
    if !norm.is_finite() {
        return Err(Error::NonFinite(format!("global gradient norm overflowed ({norm})")));
    }
    if norm > max_norm {
        let s = F::of(max_norm / norm);
        for p in params.iter_mut() {
            p.grad.scale(s);
        }
    }
    Ok(norm)
}

/// `lambda * sum ||W||^2` over parameters flagged for regularization.
pub fn l2_penalty<F: Scalar>(params: &[&Parameter<F>], lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    lambda
        * params
            .iter()
            .filter(|p| p.l2_regularized)
            .map(|p| p.value.sum_squares())
            .sum::<f64>()
}

/// Adds `2 * lambda * W` to the gradient of each flagged parameter.
pub fn l2_penalty_backward<F: Scalar>(params: &mut [&mut Parameter<F>], lambda: f64) {
    if lambda == 0.0 {
        return;
    }
    let k = F::of(2.0 * lambda);
    for p in params.iter_mut().filter(|p| p.l2_regularized) {
        let Parameter { value, grad, .. } = &mut **p;
        for (g, &w) in grad.data_mut().iter_mut().zip(value.data()) {
            *g += k * w;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct Adam<F: Scalar = f32> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut Parameter<F>]) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![F::zero(); p.value.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer tracks {} parameters, got {}",
                self.m.len(),
                params.len()
            )));
        }
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (F::of(self.beta1), F::of(self.beta2));
        let c1 = F::of(1.0 - self.beta1.powi(t));
        let c2 = F::of(1.0 - self.beta2.powi(t));
        let (lr, eps) = (F::of(self.lr), F::of(self.eps));
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Parameter { value, grad, name, .. } = &mut **p;
            for (((w, &g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (F::one() - b1) * g;
                *vi = b2 * *vi + (F::one() - b2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            value.check_finite(&format!("{name} after update"))?;
        }
        Ok(())
    }
}

/// Plain gradient descent.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn step<F: Scalar>(&mut self, params: &mut [&mut Parameter<F>]) -> Result<()> {
        let lr = F::of(self.lr);
        for p in params.iter_mut() {
            let Parameter { value, grad, name, .. } = &mut **p;
            for (w, &g) in value.data_mut().iter_mut().zip(grad.data()) {
                *w -= lr * g;
            }
            value.check_finite(&format!("{name} after update"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer<F: Scalar = f32> {
    Adam(Adam<F>),
    Sgd(Sgd),
}

impl<F: Scalar> Optimizer<F> {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(lr)),
            OptimizerKind::Sgd => Optimizer::Sgd(Sgd { lr }),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Parameter<F>]) -> Result<()> {
        match self {
            Optimizer::Adam(a) => a.step(params),
            Optimizer::Sgd(s) => s.step(params),
        }
    }
}
