//! Differentiable layer operations with explicit backward passes.
//!
//! Backward functions accumulate (`+=`) into parameter gradients and return
//! freshly allocated input gradients.

use super::rng::RngStream;
use super::scalar::{gemm, MatRef, Scalar};
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn expect_rank<F: Scalar>(op: &'static str, t: &Tensor<F>, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::shape(
            op,
            format!("expected rank {rank}, got shape {:?}", t.shape()),
        ));
    }
    Ok(())
}

/// Adds each column's sum of `dy` (`rows x cols`) into `acc` (`cols`).
fn accumulate_column_sums<F: Scalar>(dy: &[F], cols: usize, acc: &mut [F]) {
    for row in dy.chunks_exact(cols) {
        for (a, &g) in acc.iter_mut().zip(row) {
            *a += g;
        }
    }
}

/// `y = x w + b` for `x: [n, d_in]`, `w: [d_in, d_out]`, `b: [d_out]`.
pub fn affine<F: Scalar>(x: &Tensor<F>, w: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    expect_rank("affine", x, 2)?;
    expect_rank("affine", w, 2)?;
    let (n, d_in) = (x.dim(0), x.dim(1));
    let d_out = w.dim(1);
    if w.dim(0) != d_in || b.shape() != [d_out] {
        return Err(Error::shape(
            "affine",
            format!("x {:?}, w {:?}, b {:?}", x.shape(), w.shape(), b.shape()),
        ));
    }
    let mut y = Tensor::zeros(&[n, d_out]);
    for row in y.data_mut().chunks_exact_mut(d_out) {
        row.copy_from_slice(b.data());
    }
    gemm(F::one(), x.as_matrix(), w.as_matrix(), F::one(), y.data_mut());
    Ok(y)
}

/// Backward of [`affine`]: accumulates into `grad_w`, `grad_b`; returns `dx`.
pub fn affine_backward<F: Scalar>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    grad_out: &Tensor<F>,
    grad_w: &mut Tensor<F>,
    grad_b: &mut Tensor<F>,
) -> Result<Tensor<F>> {
    let (n, d_in) = (x.dim(0), x.dim(1));
    let d_out = w.dim(1);
    if grad_out.shape() != [n, d_out] {
        return Err(Error::shape(
            "affine_backward",
            format!("grad_out {:?}, expected [{n}, {d_out}]", grad_out.shape()),
        ));
    }
    gemm(F::one(), x.as_matrix().t(), grad_out.as_matrix(), F::one(), grad_w.data_mut());
    accumulate_column_sums(grad_out.data(), d_out, grad_b.data_mut());
    let mut dx = Tensor::zeros(&[n, d_in]);
    gemm(F::one(), grad_out.as_matrix(), w.as_matrix().t(), F::zero(), dx.data_mut());
    Ok(dx)
}

/// Valid convolution along time with filters spanning the full embedding
/// width: `x: [n, T, d]`, `filters: [w, d, f]`, `bias: [f]` → `[n, T-w+1, f]`.
///
/// Each output step is the dot product of the contiguous `w*d` window of
/// `x` starting at that step with each filter.
pub fn conv1d_over_time<F: Scalar>(
    x: &Tensor<F>,
    filters: &Tensor<F>,
    bias: &Tensor<F>,
) -> Result<Tensor<F>> {
    expect_rank("conv1d_over_time", x, 3)?;
    expect_rank("conv1d_over_time", filters, 3)?;
    let (n, t, d) = (x.dim(0), x.dim(1), x.dim(2));
    let (w, fd, f) = (filters.dim(0), filters.dim(1), filters.dim(2));
    if fd != d || bias.shape() != [f] {
        return Err(Error::shape(
            "conv1d_over_time",
            format!("x {:?}, filters {:?}, bias {:?}", x.shape(), filters.shape(), bias.shape()),
        ));
    }
    if w == 0 || w > t {
        return Err(Error::shape(
            "conv1d_over_time",
            format!("filter width {w} exceeds sequence length {t}"),
        ));
    }
    let steps = t - w + 1;
    let kernel = MatRef::new(filters.data(), w * d, f);
    let mut y = Tensor::zeros(&[n, steps, f]);
    for (i, out) in y.data_mut().chunks_exact_mut(steps * f).enumerate() {
        for row in out.chunks_exact_mut(f) {
            row.copy_from_slice(bias.data());
        }
        let xi = &x.data()[i * t * d..(i + 1) * t * d];
        let windows = MatRef::strided(xi, steps, w * d, d, 1);
        gemm(F::one(), windows, kernel, F::one(), out);
    }
    Ok(y)
}

/// Backward of [`conv1d_over_time`]. The input gradient is only computed
/// when `need_input_grad` is set (frozen embeddings do not need it).
pub fn conv1d_over_time_backward<F: Scalar>(
    x: &Tensor<F>,
    filters: &Tensor<F>,
    grad_out: &Tensor<F>,
    grad_filters: &mut Tensor<F>,
    grad_bias: &mut Tensor<F>,
    need_input_grad: bool,
) -> Result<Option<Tensor<F>>> {
    let (n, t, d) = (x.dim(0), x.dim(1), x.dim(2));
    let (w, f) = (filters.dim(0), filters.dim(2));
    let steps = t - w + 1;
    if grad_out.shape() != [n, steps, f] {
        return Err(Error::shape(
            "conv1d_over_time_backward",
            format!("grad_out {:?}, expected [{n}, {steps}, {f}]", grad_out.shape()),
        ));
    }
    let kernel = MatRef::new(filters.data(), w * d, f);
    let mut dx = need_input_grad.then(|| Tensor::zeros(&[n, t, d]));
    let mut dwin = vec![F::zero(); if need_input_grad { steps * w * d } else { 0 }];
    for i in 0..n {
        let xi = &x.data()[i * t * d..(i + 1) * t * d];
        let gi = &grad_out.data()[i * steps * f..(i + 1) * steps * f];
        let windows = MatRef::strided(xi, steps, w * d, d, 1);
        let g = MatRef::new(gi, steps, f);
        gemm(F::one(), windows.t(), g, F::one(), grad_filters.data_mut());
        accumulate_column_sums(gi, f, grad_bias.data_mut());
        if let Some(dx) = dx.as_mut() {
            gemm(F::one(), g, kernel.t(), F::zero(), &mut dwin);
            let dxi = &mut dx.data_mut()[i * t * d..(i + 1) * t * d];
            for (s, win) in dwin.chunks_exact(w * d).enumerate() {
                for (a, &b) in dxi[s * d..s * d + w * d].iter_mut().zip(win) {
                    *a += b;
                }
            }
        }
    }
    Ok(dx)
}

/// Max over the time axis: `[n, T, f]` → `[n, f]`, plus the winning time
/// index of each `(example, feature)` (earliest on ties).
pub fn max_over_time<F: Scalar>(x: &Tensor<F>) -> Result<(Tensor<F>, Vec<usize>)> {
    expect_rank("max_over_time", x, 3)?;
    let (n, t, f) = (x.dim(0), x.dim(1), x.dim(2));
    if t == 0 {
        return Err(Error::shape("max_over_time", "empty time axis"));
    }
    let mut y = Tensor::zeros(&[n, f]);
    let mut argmax = vec![0usize; n * f];
    for i in 0..n {
        let xi = &x.data()[i * t * f..(i + 1) * t * f];
        let yi = &mut y.data_mut()[i * f..(i + 1) * f];
        let ai = &mut argmax[i * f..(i + 1) * f];
        yi.copy_from_slice(&xi[..f]);
        for (s, step) in xi.chunks_exact(f).enumerate().skip(1) {
            for j in 0..f {
                if step[j] > yi[j] {
                    yi[j] = step[j];
                    ai[j] = s;
                }
            }
        }
    }
    Ok((y, argmax))
}

/// Routes each pooled gradient back to its argmax step.
pub fn max_over_time_backward<F: Scalar>(
    argmax: &[usize],
    steps: usize,
    grad_out: &Tensor<F>,
) -> Tensor<F> {
    let (n, f) = (grad_out.dim(0), grad_out.dim(1));
    let mut dx = Tensor::zeros(&[n, steps, f]);
    let dxd = dx.data_mut();
    for i in 0..n {
        for j in 0..f {
            let s = argmax[i * f + j];
            dxd[(i * steps + s) * f + j] += grad_out.data()[i * f + j];
        }
    }
    dx
}

pub fn sigmoid_scalar<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

pub fn relu<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    x.map(|v| if v > F::zero() { v } else { F::zero() })
}

/// Uses the forward input; the kink at 0 gets gradient 0.
pub fn relu_backward<F: Scalar>(x: &Tensor<F>, grad_out: &Tensor<F>) -> Tensor<F> {
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > F::zero() { g } else { F::zero() })
        .collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

pub fn tanh<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    x.map(F::tanh)
}

/// Uses the forward output `y = tanh(x)`.
pub fn tanh_backward<F: Scalar>(y: &Tensor<F>, grad_out: &Tensor<F>) -> Tensor<F> {
    let data = y
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| g * (F::one() - v * v))
        .collect();
    Tensor::from_vec(y.shape(), data).expect("same shape")
}

pub fn sigmoid<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    x.map(sigmoid_scalar)
}

/// Uses the forward output `y = sigmoid(x)`.
pub fn sigmoid_backward<F: Scalar>(y: &Tensor<F>, grad_out: &Tensor<F>) -> Tensor<F> {
    let data = y
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| g * v * (F::one() - v))
        .collect();
    Tensor::from_vec(y.shape(), data).expect("same shape")
}

/// Inverted dropout. Returns the output and, in training mode, the mask
/// (0 or `1/keep_prob` per entry) that the backward pass multiplies by.
pub fn dropout<F: Scalar>(
    x: &Tensor<F>,
    keep_prob: f64,
    training: bool,
    rng: &mut RngStream,
) -> Result<(Tensor<F>, Option<Vec<F>>)> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "dropout keep probability {keep_prob} not in (0, 1]"
        )));
    }
    if !training || keep_prob == 1.0 {
        return Ok((x.clone(), None));
    }
    let scale = F::of(1.0 / keep_prob);
    let mask: Vec<F> = (0..x.len())
        .map(|_| {
            if rng.uniform() < keep_prob {
                scale
            } else {
                F::zero()
            }
        })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor::from_vec(x.shape(), data)?, Some(mask)))
}

pub fn dropout_backward<F: Scalar>(mask: Option<&[F]>, grad_out: &Tensor<F>) -> Tensor<F> {
    match mask {
        None => grad_out.clone(),
        Some(m) => {
            let data = grad_out.data().iter().zip(m).map(|(&g, &k)| g * k).collect();
            Tensor::from_vec(grad_out.shape(), data).expect("mask matches")
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax<F: Scalar>(logits: &Tensor<F>) -> Tensor<F> {
    let c = logits.dim(1);
    let mut p = logits.clone();
    for row in p.data_mut().chunks_exact_mut(c) {
        let m = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut z = F::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    p
}

#[derive(Debug, Clone)]
pub struct LossOutput<F: Scalar> {
    /// Mean over the batch.
    pub loss: F,
    /// Gradient of `loss` with respect to the logits.
    pub grad: Tensor<F>,
}

fn check_labels<F: Scalar>(op: &'static str, logits: &Tensor<F>, labels: &[usize]) -> Result<()> {
    expect_rank(op, logits, 2)?;
    if labels.len() != logits.dim(0) {
        return Err(Error::shape(
            op,
            format!("{} labels for {} rows", labels.len(), logits.dim(0)),
        ));
    }
    let c = logits.dim(1);
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::InvalidArgument(format!(
            "{op}: label {bad} out of range for {c} classes"
        )));
    }
    Ok(())
}

/// Mean negative log-likelihood of softmax probabilities.
pub fn softmax_cross_entropy<F: Scalar>(
    logits: &Tensor<F>,
    labels: &[usize],
) -> Result<LossOutput<F>> {
    check_labels("softmax_cross_entropy", logits, labels)?;
    let (n, c) = (logits.dim(0), logits.dim(1));
    let inv_n = F::one() / F::of(n as f64);
    let mut grad = Tensor::zeros(&[n, c]);
    let mut loss = F::zero();
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let m = row.iter().copied().fold(F::neg_infinity(), F::max);
        let z: F = row.iter().map(|&v| (v - m).exp()).sum();
        let log_z = z.ln() + m;
        loss += log_z - row[y];
        let g = grad.row_mut(i);
        for j in 0..c {
            g[j] = (row[j] - log_z).exp() * inv_n;
        }
        g[y] -= inv_n;
    }
    Ok(LossOutput {
        loss: loss * inv_n,
        grad,
    })
}

/// One-vs-rest hinge loss: for each class, target `+1` for the true class
/// and `-1` otherwise; `mean_i sum_c max(0, 1 - t_ic * s_ic)`.
pub fn one_vs_rest_hinge<F: Scalar>(scores: &Tensor<F>, labels: &[usize]) -> Result<LossOutput<F>> {
    check_labels("one_vs_rest_hinge", scores, labels)?;
    let (n, c) = (scores.dim(0), scores.dim(1));
    let inv_n = F::one() / F::of(n as f64);
    let mut grad = Tensor::zeros(&[n, c]);
    let mut loss = F::zero();
    for (i, &y) in labels.iter().enumerate() {
        let row = scores.row(i).to_vec();
        let g = grad.row_mut(i);
        for j in 0..c {
            let t = if j == y { F::one() } else { -F::one() };
            let margin = F::one() - t * row[j];
            if margin > F::zero() {
                loss += margin;
                g[j] = -t * inv_n;
            }
        }
    }
    Ok(LossOutput {
        loss: loss * inv_n,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::rng::Purpose;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn affine_identity_and_bias_broadcast() {
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let eye = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        let zero_b = Tensor::zeros(&[3]);
        assert_eq!(affine(&x, &eye, &zero_b).unwrap(), x);

        let b = t(&[3], &[0.5, -1.0, 2.0]);
        let y = affine(&Tensor::zeros(&[2, 3]), &eye, &b).unwrap();
        assert_eq!(y.data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
        assert!(affine(&x, &Tensor::zeros(&[2, 3]), &zero_b).is_err());
    }

    #[test]
    fn conv_one_hot_filter_copies_coordinate() {
        // d = 3, filter picks coordinate 1
        let x = t(&[1, 4, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9., 10., 11., 12.]);
        let filt = t(&[1, 3, 1], &[0.0, 1.0, 0.0]);
        let y = conv1d_over_time(&x, &filt, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(y.shape(), &[1, 4, 1]);
        assert_eq!(y.data(), &[2.0, 5.0, 8.0, 11.0]);
    }

    #[test]
    fn conv_all_ones() {
        let d = 5;
        let x = Tensor::<f64>::full(&[2, 6, d], 1.0);
        let filt = Tensor::full(&[2, d, 3], 1.0);
        let y = conv1d_over_time(&x, &filt, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y.shape(), &[2, 5, 3]);
        assert!(y.data().iter().all(|&v| v == 2.0 * d as f64));
    }

    #[test]
    fn conv_rejects_wide_filter() {
        let x = Tensor::<f64>::zeros(&[1, 3, 2]);
        let filt = Tensor::zeros(&[4, 2, 1]);
        assert!(matches!(
            conv1d_over_time(&x, &filt, &Tensor::zeros(&[1])),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn max_pool_values_and_routes() {
        let x = t(&[1, 3, 1], &[1.0, 3.0, 2.0]);
        let (y, arg) = max_over_time(&x).unwrap();
        assert_eq!(y.data(), &[3.0]);
        assert_eq!(arg, vec![1]);
        let dx = max_over_time_backward(&arg, 3, &t(&[1, 1], &[1.0]));
        assert_eq!(dx.data(), &[0.0, 1.0, 0.0]);

        let single = t(&[2, 1, 2], &[1.0, -2.0, 3.0, 4.0]);
        assert_eq!(max_over_time(&single).unwrap().0.data(), single.data());

        let tie = t(&[1, 3, 1], &[5.0, 5.0, 1.0]);
        assert_eq!(max_over_time(&tie).unwrap().1, vec![0]);
    }

    #[test]
    fn activation_values() {
        let x = t(&[2], &[-1.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);
        assert_eq!(sigmoid(&t(&[1], &[0.0])).data(), &[0.5]);
        assert_eq!(tanh(&t(&[1], &[0.0])).data(), &[0.0]);
    }

    #[test]
    fn dropout_identity_cases() {
        let x = Tensor::<f32>::from_fn(&[4, 4], |i| i as f32);
        let mut rng = RngStream::new(1, Purpose::Dropout);
        assert_eq!(dropout(&x, 1.0, true, &mut rng).unwrap().0, x);
        assert_eq!(dropout(&x, 0.3, false, &mut rng).unwrap().0, x);
        assert!(dropout(&x, 0.0, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_statistics() {
        let n = 100_000;
        let x = Tensor::<f64>::full(&[n], 2.0);
        let mut rng = RngStream::new(3, Purpose::Dropout);
        let (y, mask) = dropout(&x, 0.5, true, &mut rng).unwrap();
        let survivors = mask.unwrap().iter().filter(|&&m| m > 0.0).count() as f64 / n as f64;
        assert!((survivors - 0.5).abs() < 0.01, "{survivors}");
        let mean = y.data().iter().sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 0.04, "{mean}");
    }

    #[test]
    fn cross_entropy_reference_values() {
        let out = softmax_cross_entropy(&Tensor::<f64>::zeros(&[4, 3]), &[0, 1, 2, 0]).unwrap();
        assert!((out.loss - 3f64.ln()).abs() < 1e-15);
        let sat = t(&[1, 3], &[30.0, 0.0, 0.0]);
        assert!(softmax_cross_entropy(&sat, &[0]).unwrap().loss < 1e-9);
        assert!(softmax_cross_entropy(&sat, &[3]).is_err());
    }

    #[test]
    fn hinge_zero_when_margins_met() {
        let s = t(&[1, 3], &[2.0, -1.5, -3.0]);
        let out = one_vs_rest_hinge(&s, &[0]).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grad.data().iter().all(|&g| g == 0.0));
        let out = one_vs_rest_hinge(&t(&[1, 2], &[0.0, 0.0]), &[1]).unwrap();
        assert_eq!(out.loss, 2.0);
        assert_eq!(out.grad.data(), &[1.0, -1.0]);
    }
}
