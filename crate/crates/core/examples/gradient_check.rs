//! Compare analytic gradients of the convolution and affine layers with
//! central finite differences in double precision.
//!
//! cargo run --example gradient_check

use agrisent::nncore::gradcheck::{grad_check, DEFAULT_EPS};
use agrisent::nncore::ops::{affine, affine_backward, conv1d_over_time, conv1d_over_time_backward};
use agrisent::nncore::{Purpose, RngStream, Tensor};

fn random(shape: &[usize], rng: &mut RngStream) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.normal())
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn main() -> agrisent::Result<()> {
    let mut rng = RngStream::new(7, Purpose::Init);

    // Loss L = <conv(x, W, b), G> for a fixed random G.
    let (n, t, d, w, f) = (2, 6, 4, 3, 5);
    let x = random(&[n, t, d], &mut rng);
    let filters = random(&[w, d, f], &mut rng);
    let bias = random(&[f], &mut rng);
    let g = random(&[n, t - w + 1, f], &mut rng);
    let mut gw = Tensor::zeros(filters.shape());
    let mut gb = Tensor::zeros(bias.shape());
    let gx = conv1d_over_time_backward(&x, &filters, &g, &mut gw, &mut gb, true)?.expect("input grad");

    let loss_of_x = |v: &[f64]| {
        let xv = Tensor::from_vec(&[n, t, d], v.to_vec()).expect("shape");
        dot(&conv1d_over_time(&xv, &filters, &bias).expect("conv"), &g)
    };
    let loss_of_w = |v: &[f64]| {
        let fv = Tensor::from_vec(&[w, d, f], v.to_vec()).expect("shape");
        dot(&conv1d_over_time(&x, &fv, &bias).expect("conv"), &g)
    };
    println!("conv1d dX max rel err {:.2e}", grad_check(loss_of_x, x.data(), gx.data(), DEFAULT_EPS));
    println!("conv1d dW max rel err {:.2e}", grad_check(loss_of_w, filters.data(), gw.data(), DEFAULT_EPS));

    let xa = random(&[3, 4], &mut rng);
    let wa = random(&[4, 2], &mut rng);
    let ba = random(&[2], &mut rng);
    let ga = random(&[3, 2], &mut rng);
    let mut gwa = Tensor::zeros(wa.shape());
    let mut gba = Tensor::zeros(ba.shape());
    let gxa = affine_backward(&xa, &wa, &ga, &mut gwa, &mut gba)?;
    let loss_of_xa = |v: &[f64]| {
        let xv = Tensor::from_vec(&[3, 4], v.to_vec()).expect("shape");
        dot(&affine(&xv, &wa, &ba).expect("affine"), &ga)
    };
    println!("affine dX max rel err {:.2e}", grad_check(loss_of_xa, xa.data(), gxa.data(), DEFAULT_EPS));
    Ok(())
}
