use super::rng::RngStream;
use super::scalar::Scalar;
use super::tensor::Tensor;

/// Fills `t` from `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<F: Scalar>(t: &mut Tensor<F>, fan_in: usize, fan_out: usize, rng: &mut RngStream) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in t.data_mut() {
        *v = F::of(rng.uniform_range(-limit, limit));
    }
}
