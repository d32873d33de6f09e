//! GRU and LSTM cells, and a length-masked multi-layer (optionally
//! bidirectional) unroller with backpropagation through time.
//!
//! GRU convention: `h_t = (1 - z) * h_prev + z * h_cand`, `z` the update gate.
//! LSTM gate column order inside the fused matrices: input, forget,
//! candidate, output.

use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;
use super::ops::sigmoid_scalar;
use super::rng::RngStream;
use super::scalar::{gemm, Scalar};
use super::tensor::{Parameter, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Gru,
    Lstm,
}

/// `w_x: [d, 3H]` (update | reset | candidate), `u_zr: [H, 2H]`,
/// `u_h: [H, H]`, `b: [3H]`.
#[derive(Debug, Clone)]
pub struct GruParams<F: Scalar = f32> {
    pub w_x: Parameter<F>,
    pub u_zr: Parameter<F>,
    pub u_h: Parameter<F>,
    pub b: Parameter<F>,
}

/// `w_x: [d, 4H]`, `u: [H, 4H]`, `b: [4H]`.
#[derive(Debug, Clone)]
pub struct LstmParams<F: Scalar = f32> {
    pub w_x: Parameter<F>,
    pub u: Parameter<F>,
    pub b: Parameter<F>,
}

impl<F: Scalar> GruParams<F> {
    pub fn zeros(prefix: &str, input: usize, hidden: usize) -> Self {
        Self {
            w_x: Parameter::zeros(format!("{prefix}.w_x"), &[input, 3 * hidden]),
            u_zr: Parameter::zeros(format!("{prefix}.u_zr"), &[hidden, 2 * hidden]),
            u_h: Parameter::zeros(format!("{prefix}.u_h"), &[hidden, hidden]),
            b: Parameter::zeros(format!("{prefix}.b"), &[3 * hidden]),
        }
    }

    /// Glorot-uniform weights (per gate block), zero biases.
    pub fn init(prefix: &str, input: usize, hidden: usize, rng: &mut RngStream) -> Self {
        let mut p = Self::zeros(prefix, input, hidden);
        glorot_uniform(&mut p.w_x.value, input, hidden, rng);
        glorot_uniform(&mut p.u_zr.value, hidden, hidden, rng);
        glorot_uniform(&mut p.u_h.value, hidden, hidden, rng);
        p
    }

    pub fn hidden(&self) -> usize {
        self.u_h.shape()[0]
    }

    pub fn input(&self) -> usize {
        self.w_x.shape()[0]
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        vec![&self.w_x, &self.u_zr, &self.u_h, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.w_x, &mut self.u_zr, &mut self.u_h, &mut self.b]
    }
}

impl<F: Scalar> LstmParams<F> {
    pub fn zeros(prefix: &str, input: usize, hidden: usize) -> Self {
        Self {
            w_x: Parameter::zeros(format!("{prefix}.w_x"), &[input, 4 * hidden]),
            u: Parameter::zeros(format!("{prefix}.u"), &[hidden, 4 * hidden]),
            b: Parameter::zeros(format!("{prefix}.b"), &[4 * hidden]),
        }
    }

    /// Glorot-uniform weights (per gate block), zero biases except the
    /// forget gate, which starts at +1.
    pub fn init(prefix: &str, input: usize, hidden: usize, rng: &mut RngStream) -> Self {
        let mut p = Self::zeros(prefix, input, hidden);
        glorot_uniform(&mut p.w_x.value, input, hidden, rng);
        glorot_uniform(&mut p.u.value, hidden, hidden, rng);
        for v in &mut p.b.value.data_mut()[hidden..2 * hidden] {
            *v = F::one();
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.u.shape()[0]
    }

    pub fn input(&self) -> usize {
        self.w_x.shape()[0]
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        vec![&self.w_x, &self.u, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        vec![&mut self.w_x, &mut self.u, &mut self.b]
    }
}

fn check_step<F: Scalar>(
    op: &'static str,
    x: &Tensor<F>,
    h: &Tensor<F>,
    input: usize,
    hidden: usize,
) -> Result<()> {
    if x.rank() != 2 || h.rank() != 2 || x.dim(1) != input || h.dim(1) != hidden || x.dim(0) != h.dim(0)
    {
        return Err(Error::shape(
            op,
            format!(
                "x {:?}, h {:?}; cell expects input {input}, hidden {hidden}",
                x.shape(),
                h.shape()
            ),
        ));
    }
    Ok(())
}

/// `[n, k] x [k, m]` product into a fresh tensor, optionally seeded with a
/// bias row.
fn project<F: Scalar>(x: &Tensor<F>, w: &Tensor<F>, bias: Option<&Tensor<F>>) -> Tensor<F> {
    let (n, m) = (x.dim(0), w.dim(1));
    let mut out = Tensor::zeros(&[n, m]);
    let beta = match bias {
        Some(b) => {
            for row in out.data_mut().chunks_exact_mut(m) {
                row.copy_from_slice(b.data());
            }
            F::one()
        }
        None => F::zero(),
    };
    gemm(F::one(), x.as_matrix(), w.as_matrix(), beta, out.data_mut());
    out
}

#[derive(Debug, Clone)]
pub struct GruCache<F: Scalar> {
    x: Tensor<F>,
    h_prev: Tensor<F>,
    z: Tensor<F>,
    r: Tensor<F>,
    cand: Tensor<F>,
    rh: Tensor<F>,
}

/// One GRU step for a batch: `x_t: [n, d]`, `h_prev: [n, H]` → `h_t: [n, H]`.
pub fn gru_cell_step<F: Scalar>(
    x: &Tensor<F>,
    h_prev: &Tensor<F>,
    p: &GruParams<F>,
) -> Result<(Tensor<F>, GruCache<F>)> {
    let hd = p.hidden();
    check_step("gru_cell_step", x, h_prev, p.input(), hd)?;
    let n = x.dim(0);
    let a = project(x, &p.w_x.value, Some(&p.b.value));
    let hu = project(h_prev, &p.u_zr.value, None);
    let mut z = Tensor::zeros(&[n, hd]);
    let mut r = Tensor::zeros(&[n, hd]);
    let mut rh = Tensor::zeros(&[n, hd]);
    for i in 0..n {
        let (ar, hr, hp) = (a.row(i), hu.row(i), h_prev.row(i));
        for j in 0..hd {
            let zv = sigmoid_scalar(ar[j] + hr[j]);
            let rv = sigmoid_scalar(ar[hd + j] + hr[hd + j]);
            z.row_mut(i)[j] = zv;
            r.row_mut(i)[j] = rv;
            rh.row_mut(i)[j] = rv * hp[j];
        }
    }
    let c = project(&rh, &p.u_h.value, None);
    let mut cand = Tensor::zeros(&[n, hd]);
    let mut h = Tensor::zeros(&[n, hd]);
    for i in 0..n {
        for j in 0..hd {
            let cv = (a.row(i)[2 * hd + j] + c.row(i)[j]).tanh();
            let zv = z.row(i)[j];
            cand.row_mut(i)[j] = cv;
            h.row_mut(i)[j] = (F::one() - zv) * h_prev.row(i)[j] + zv * cv;
        }
    }
    let cache = GruCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        z,
        r,
        cand,
        rh,
    };
    Ok((h, cache))
}

/// Backward of [`gru_cell_step`]; accumulates parameter gradients and
/// returns `(dx, dh_prev)`.
pub fn gru_cell_backward<F: Scalar>(
    p: &mut GruParams<F>,
    cache: &GruCache<F>,
    dh: &Tensor<F>,
) -> (Tensor<F>, Tensor<F>) {
    let hd = p.hidden();
    let n = dh.dim(0);
    let mut da = Tensor::zeros(&[n, 3 * hd]);
    let mut dh_prev = Tensor::zeros(&[n, hd]);
    let mut dcand_pre = Tensor::zeros(&[n, hd]);
    for i in 0..n {
        for j in 0..hd {
            let g = dh.row(i)[j];
            let zv = cache.z.row(i)[j];
            let cv = cache.cand.row(i)[j];
            let hp = cache.h_prev.row(i)[j];
            dh_prev.row_mut(i)[j] = g * (F::one() - zv);
            let dz = g * (cv - hp);
            da.row_mut(i)[j] = dz * zv * (F::one() - zv);
            let dc = g * zv * (F::one() - cv * cv);
            dcand_pre.row_mut(i)[j] = dc;
            da.row_mut(i)[2 * hd + j] = dc;
        }
    }
    // candidate path through (r * h_prev) U_h
    gemm(
        F::one(),
        cache.rh.as_matrix().t(),
        dcand_pre.as_matrix(),
        F::one(),
        p.u_h.grad.data_mut(),
    );
    let mut drh = Tensor::zeros(&[n, hd]);
    gemm(
        F::one(),
        dcand_pre.as_matrix(),
        p.u_h.value.as_matrix().t(),
        F::zero(),
        drh.data_mut(),
    );
    let mut dzr = Tensor::zeros(&[n, 2 * hd]);
    for i in 0..n {
        for j in 0..hd {
            let g = drh.row(i)[j];
            let rv = cache.r.row(i)[j];
            let hp = cache.h_prev.row(i)[j];
            dh_prev.row_mut(i)[j] += g * rv;
            let dr = g * hp * rv * (F::one() - rv);
            da.row_mut(i)[hd + j] = dr;
            dzr.row_mut(i)[j] = da.row(i)[j];
            dzr.row_mut(i)[hd + j] = dr;
        }
    }
    gemm(
        F::one(),
        cache.h_prev.as_matrix().t(),
        dzr.as_matrix(),
        F::one(),
        p.u_zr.grad.data_mut(),
    );
    gemm(
        F::one(),
        dzr.as_matrix(),
        p.u_zr.value.as_matrix().t(),
        F::one(),
        dh_prev.data_mut(),
    );
    gemm(
        F::one(),
        cache.x.as_matrix().t(),
        da.as_matrix(),
        F::one(),
        p.w_x.grad.data_mut(),
    );
    for row in da.data().chunks_exact(3 * hd) {
        for (acc, &g) in p.b.grad.data_mut().iter_mut().zip(row) {
            *acc += g;
        }
    }
    let mut dx = Tensor::zeros(&[n, p.input()]);
    gemm(
        F::one(),
        da.as_matrix(),
        p.w_x.value.as_matrix().t(),
        F::zero(),
        dx.data_mut(),
    );
    (dx, dh_prev)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<F: Scalar> {
    pub h: Tensor<F>,
    pub c: Tensor<F>,
}

impl<F: Scalar> LstmState<F> {
    pub fn zeros(n: usize, hidden: usize) -> Self {
        Self {
            h: Tensor::zeros(&[n, hidden]),
            c: Tensor::zeros(&[n, hidden]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LstmCache<F: Scalar> {
    x: Tensor<F>,
    h_prev: Tensor<F>,
    c_prev: Tensor<F>,
    /// Activated gates, `[n, 4H]` in i, f, g, o order.
    gates: Tensor<F>,
    tanh_c: Tensor<F>,
}

/// One LSTM step for a batch.
pub fn lstm_cell_step<F: Scalar>(
    x: &Tensor<F>,
    state: &LstmState<F>,
    p: &LstmParams<F>,
) -> Result<(LstmState<F>, LstmCache<F>)> {
    let hd = p.hidden();
    check_step("lstm_cell_step", x, &state.h, p.input(), hd)?;
    if state.c.shape() != state.h.shape() {
        return Err(Error::shape("lstm_cell_step", "cell state shape differs from h"));
    }
    let n = x.dim(0);
    let mut gates = project(x, &p.w_x.value, Some(&p.b.value));
    gemm(
        F::one(),
        state.h.as_matrix(),
        p.u.value.as_matrix(),
        F::one(),
        gates.data_mut(),
    );
    let mut next = LstmState::zeros(n, hd);
    let mut tanh_c = Tensor::zeros(&[n, hd]);
    for i in 0..n {
        let g = gates.row_mut(i);
        for j in 0..hd {
            g[j] = sigmoid_scalar(g[j]);
            g[hd + j] = sigmoid_scalar(g[hd + j]);
            g[2 * hd + j] = g[2 * hd + j].tanh();
            g[3 * hd + j] = sigmoid_scalar(g[3 * hd + j]);
        }
        let g = gates.row(i);
        for j in 0..hd {
            let c = g[hd + j] * state.c.row(i)[j] + g[j] * g[2 * hd + j];
            let tc = c.tanh();
            next.c.row_mut(i)[j] = c;
            tanh_c.row_mut(i)[j] = tc;
            next.h.row_mut(i)[j] = g[3 * hd + j] * tc;
        }
    }
    let cache = LstmCache {
        x: x.clone(),
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        gates,
        tanh_c,
    };
    Ok((next, cache))
}

/// Backward of [`lstm_cell_step`] given gradients on `h_t` and `c_t`;
/// returns `(dx, dh_prev, dc_prev)`.
pub fn lstm_cell_backward<F: Scalar>(
    p: &mut LstmParams<F>,
    cache: &LstmCache<F>,
    dh: &Tensor<F>,
    dc: &Tensor<F>,
) -> (Tensor<F>, Tensor<F>, Tensor<F>) {
    let hd = p.hidden();
    let n = dh.dim(0);
    let mut da = Tensor::zeros(&[n, 4 * hd]);
    let mut dc_prev = Tensor::zeros(&[n, hd]);
    for i in 0..n {
        let g = cache.gates.row(i);
        for j in 0..hd {
            let (ig, fg, cg, og) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
            let tc = cache.tanh_c.row(i)[j];
            let gh = dh.row(i)[j];
            let d_o = gh * tc;
            let d_c = dc.row(i)[j] + gh * og * (F::one() - tc * tc);
            let d_f = d_c * cache.c_prev.row(i)[j];
            let d_i = d_c * cg;
            let d_g = d_c * ig;
            dc_prev.row_mut(i)[j] = d_c * fg;
            let r = da.row_mut(i);
            r[j] = d_i * ig * (F::one() - ig);
            r[hd + j] = d_f * fg * (F::one() - fg);
            r[2 * hd + j] = d_g * (F::one() - cg * cg);
            r[3 * hd + j] = d_o * og * (F::one() - og);
        }
    }
    gemm(
        F::one(),
        cache.x.as_matrix().t(),
        da.as_matrix(),
        F::one(),
        p.w_x.grad.data_mut(),
    );
    gemm(
        F::one(),
        cache.h_prev.as_matrix().t(),
        da.as_matrix(),
        F::one(),
        p.u.grad.data_mut(),
    );
    for row in da.data().chunks_exact(4 * hd) {
        for (acc, &g) in p.b.grad.data_mut().iter_mut().zip(row) {
            *acc += g;
        }
    }
    let mut dx = Tensor::zeros(&[n, p.input()]);
    gemm(
        F::one(),
        da.as_matrix(),
        p.w_x.value.as_matrix().t(),
        F::zero(),
        dx.data_mut(),
    );
    let mut dh_prev = Tensor::zeros(&[n, hd]);
    gemm(
        F::one(),
        da.as_matrix(),
        p.u.value.as_matrix().t(),
        F::zero(),
        dh_prev.data_mut(),
    );
    (dx, dh_prev, dc_prev)
}

#[derive(Debug, Clone)]
pub enum CellParams<F: Scalar = f32> {
    Gru(GruParams<F>),
    Lstm(LstmParams<F>),
}

impl<F: Scalar> CellParams<F> {
    pub fn init(kind: CellKind, prefix: &str, input: usize, hidden: usize, rng: &mut RngStream) -> Self {
        match kind {
            CellKind::Gru => CellParams::Gru(GruParams::init(prefix, input, hidden, rng)),
            CellKind::Lstm => CellParams::Lstm(LstmParams::init(prefix, input, hidden, rng)),
        }
    }

    pub fn kind(&self) -> CellKind {
        match self {
            CellParams::Gru(_) => CellKind::Gru,
            CellParams::Lstm(_) => CellKind::Lstm,
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            CellParams::Gru(p) => p.hidden(),
            CellParams::Lstm(p) => p.hidden(),
        }
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        match self {
            CellParams::Gru(p) => p.params(),
            CellParams::Lstm(p) => p.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        match self {
            CellParams::Gru(p) => p.params_mut(),
            CellParams::Lstm(p) => p.params_mut(),
        }
    }
}

/// One recurrent layer: a forward cell and, when bidirectional, a cell
/// that reads each sequence from its last real token back to its first.
#[derive(Debug, Clone)]
pub struct RnnLayer<F: Scalar = f32> {
    pub forward: CellParams<F>,
    pub backward: Option<CellParams<F>>,
}

#[derive(Debug, Clone)]
pub struct RnnStack<F: Scalar = f32> {
    pub layers: Vec<RnnLayer<F>>,
}

impl<F: Scalar> RnnStack<F> {
    /// Layer `l > 0` reads the (concatenated) hidden states of layer `l-1`.
    pub fn init(
        kind: CellKind,
        input: usize,
        hidden: usize,
        bidirectional: bool,
        num_layers: usize,
        rng: &mut RngStream,
    ) -> Self {
        let dirs = if bidirectional { 2 } else { 1 };
        let layers = (0..num_layers)
            .map(|l| {
                let width = if l == 0 { input } else { dirs * hidden };
                RnnLayer {
                    forward: CellParams::init(kind, &format!("rnn.l{l}.fwd"), width, hidden, rng),
                    backward: bidirectional.then(|| {
                        CellParams::init(kind, &format!("rnn.l{l}.bwd"), width, hidden, rng)
                    }),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn bidirectional(&self) -> bool {
        self.layers[0].backward.is_some()
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].forward.hidden()
    }

    /// Width of the sentence representation.
    pub fn output_width(&self) -> usize {
        self.hidden() * if self.bidirectional() { 2 } else { 1 }
    }

    pub fn params(&self) -> Vec<&Parameter<F>> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.forward.params());
            if let Some(b) = &l.backward {
                out.extend(b.params());
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<F>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.extend(l.forward.params_mut());
            if let Some(b) = &mut l.backward {
                out.extend(b.params_mut());
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
enum StepCache<F: Scalar> {
    Gru(GruCache<F>),
    Lstm(LstmCache<F>),
}

#[derive(Debug, Clone)]
struct DirectionCache<F: Scalar> {
    steps: Vec<StepCache<F>>,
}

#[derive(Debug, Clone)]
struct LayerCache<F: Scalar> {
    input_width: usize,
    forward: DirectionCache<F>,
    backward: Option<DirectionCache<F>>,
}

/// Saved activations of [`run_rnn`].
#[derive(Debug, Clone)]
pub struct RnnCache<F: Scalar> {
    lengths: Vec<usize>,
    total_steps: usize,
    active_steps: usize,
    layers: Vec<LayerCache<F>>,
}

/// Copies `rows` (examples that are past their length at this step) from
/// `src` into `dst`.
fn copy_rows<F: Scalar>(dst: &mut Tensor<F>, src: &Tensor<F>, rows: &[usize]) {
    for &i in rows {
        dst.row_mut(i).copy_from_slice(src.row(i));
    }
}

fn inactive_rows(lengths: &[usize], t: usize) -> Vec<usize> {
    lengths
        .iter()
        .enumerate()
        .filter(|(_, &len)| t >= len)
        .map(|(i, _)| i)
        .collect()
}

/// Runs one direction over `inputs` (one `[n, width]` tensor per step).
/// Rows past their length keep their previous state, so the final state of
/// row `i` is the state after step `lengths[i]`.
fn run_direction<F: Scalar>(
    cell: &CellParams<F>,
    inputs: &[Tensor<F>],
    lengths: &[usize],
) -> Result<(Vec<Tensor<F>>, Tensor<F>, DirectionCache<F>)> {
    let n = lengths.len();
    let hd = cell.hidden();
    let mut h = Tensor::zeros(&[n, hd]);
    let mut c = Tensor::zeros(&[n, hd]);
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut steps = Vec::with_capacity(inputs.len());
    for (t, x) in inputs.iter().enumerate() {
        let idle = inactive_rows(lengths, t);
        match cell {
            CellParams::Gru(p) => {
                let (mut next, cache) = gru_cell_step(x, &h, p)?;
                copy_rows(&mut next, &h, &idle);
                h = next;
                steps.push(StepCache::Gru(cache));
            }
            CellParams::Lstm(p) => {
                let state = LstmState { h, c };
                let (mut next, cache) = lstm_cell_step(x, &state, p)?;
                copy_rows(&mut next.h, &state.h, &idle);
                copy_rows(&mut next.c, &state.c, &idle);
                h = next.h;
                c = next.c;
                steps.push(StepCache::Lstm(cache));
            }
        }
        outputs.push(h.clone());
    }
    Ok((outputs, h, DirectionCache { steps }))
}

fn zero_rows<F: Scalar>(t: &mut Tensor<F>, rows: &[usize]) {
    for &i in rows {
        t.row_mut(i).fill(F::zero());
    }
}

/// Backward of [`run_direction`]; returns per-step input gradients.
fn backward_direction<F: Scalar>(
    cell: &mut CellParams<F>,
    cache: &DirectionCache<F>,
    lengths: &[usize],
    grad_outputs: Option<&[Tensor<F>]>,
    grad_final: &Tensor<F>,
) -> Vec<Tensor<F>> {
    let n = lengths.len();
    let hd = cell.hidden();
    let mut dh = grad_final.clone();
    let mut dc = Tensor::zeros(&[n, hd]);
    let mut dxs = vec![Tensor::zeros(&[0]); cache.steps.len()];
    for t in (0..cache.steps.len()).rev() {
        if let Some(go) = grad_outputs {
            dh.add_assign(&go[t]);
        }
        let idle = inactive_rows(lengths, t);
        let mut dh_cell = dh.clone();
        zero_rows(&mut dh_cell, &idle);
        match (&mut *cell, &cache.steps[t]) {
            (CellParams::Gru(p), StepCache::Gru(sc)) => {
                let (dx, mut dh_prev) = gru_cell_backward(p, sc, &dh_cell);
                copy_rows(&mut dh_prev, &dh, &idle);
                dh = dh_prev;
                dxs[t] = dx;
            }
            (CellParams::Lstm(p), StepCache::Lstm(sc)) => {
                let mut dc_cell = dc.clone();
                zero_rows(&mut dc_cell, &idle);
                let (dx, mut dh_prev, mut dc_prev) = lstm_cell_backward(p, sc, &dh_cell, &dc_cell);
                copy_rows(&mut dh_prev, &dh, &idle);
                copy_rows(&mut dc_prev, &dc, &idle);
                dh = dh_prev;
                dc = dc_prev;
                dxs[t] = dx;
            }
            _ => unreachable!("cache built by the same cell"),
        }
    }
    dxs
}

/// Reverses each row's first `lengths[i]` steps; rows past their length
/// become zero. Applying it twice restores the valid part.
fn reverse_within_lengths<F: Scalar>(seq: &[Tensor<F>], lengths: &[usize]) -> Vec<Tensor<F>> {
    let steps = seq.len();
    let width = seq.first().map(|t| t.dim(1)).unwrap_or(0);
    (0..steps)
        .map(|t| {
            let mut out = Tensor::zeros(&[lengths.len(), width]);
            for (i, &len) in lengths.iter().enumerate() {
                if t < len {
                    out.row_mut(i).copy_from_slice(seq[len - 1 - t].row(i));
                }
            }
            out
        })
        .collect()
}

fn concat_cols<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    let n = a.dim(0);
    let (wa, wb) = (a.dim(1), b.dim(1));
    let mut out = Tensor::zeros(&[n, wa + wb]);
    for i in 0..n {
        let r = out.row_mut(i);
        r[..wa].copy_from_slice(a.row(i));
        r[wa..].copy_from_slice(b.row(i));
    }
    out
}

fn split_cols<F: Scalar>(t: &Tensor<F>, left: usize) -> (Tensor<F>, Tensor<F>) {
    let n = t.dim(0);
    let right = t.dim(1) - left;
    let mut a = Tensor::zeros(&[n, left]);
    let mut b = Tensor::zeros(&[n, right]);
    for i in 0..n {
        a.row_mut(i).copy_from_slice(&t.row(i)[..left]);
        b.row_mut(i).copy_from_slice(&t.row(i)[left..]);
    }
    (a, b)
}

/// Unrolls the stack over `seq: [n, T, d]`.
///
/// The representation of example `i` is the top layer's forward state after
/// step `lengths[i]`, concatenated (bidirectional) with the backward
/// direction's state after it has read back to step 1. Steps at or beyond
/// `lengths[i]` are never read.
pub fn run_rnn<F: Scalar>(
    seq: &Tensor<F>,
    lengths: &[usize],
    stack: &RnnStack<F>,
) -> Result<(Tensor<F>, RnnCache<F>)> {
    if seq.rank() != 3 || seq.dim(0) != lengths.len() {
        return Err(Error::shape(
            "run_rnn",
            format!("sequence {:?} with {} lengths", seq.shape(), lengths.len()),
        ));
    }
    let (n, t_total, d) = (seq.dim(0), seq.dim(1), seq.dim(2));
    if let Some(&bad) = lengths.iter().find(|&&l| l == 0 || l > t_total) {
        return Err(Error::InvalidArgument(format!(
            "run_rnn: length {bad} not in [1, {t_total}]"
        )));
    }
    if stack.layers.is_empty() {
        return Err(Error::InvalidArgument("run_rnn: no layers".into()));
    }
    let active_steps = lengths.iter().copied().max().unwrap_or(0);
    let mut inputs: Vec<Tensor<F>> = (0..active_steps)
        .map(|t| {
            let mut x = Tensor::zeros(&[n, d]);
            for i in 0..n {
                let off = (i * t_total + t) * d;
                x.row_mut(i).copy_from_slice(&seq.data()[off..off + d]);
            }
            x
        })
        .collect();

    let mut layer_caches = Vec::with_capacity(stack.layers.len());
    let mut rep = Tensor::zeros(&[0]);
    for layer in &stack.layers {
        let input_width = inputs[0].dim(1);
        let (fwd_out, fwd_final, fwd_cache) = run_direction(&layer.forward, &inputs, lengths)?;
        let (outputs, final_state, bwd_cache) = match &layer.backward {
            None => (fwd_out, fwd_final, None),
            Some(cell) => {
                let rev = reverse_within_lengths(&inputs, lengths);
                let (bwd_out, bwd_final, cache) = run_direction(cell, &rev, lengths)?;
                let bwd_aligned = reverse_within_lengths(&bwd_out, lengths);
                let outputs = fwd_out
                    .iter()
                    .zip(&bwd_aligned)
                    .map(|(a, b)| concat_cols(a, b))
                    .collect();
                (outputs, concat_cols(&fwd_final, &bwd_final), Some(cache))
            }
        };
        layer_caches.push(LayerCache {
            input_width,
            forward: fwd_cache,
            backward: bwd_cache,
        });
        inputs = outputs;
        rep = final_state;
    }
    Ok((
        rep,
        RnnCache {
            lengths: lengths.to_vec(),
            total_steps: t_total,
            active_steps,
            layers: layer_caches,
        },
    ))
}

/// Backpropagation through time for [`run_rnn`]. Returns the gradient with
/// respect to the input sequence when `need_input_grad` is set.
pub fn run_rnn_backward<F: Scalar>(
    stack: &mut RnnStack<F>,
    cache: &RnnCache<F>,
    grad_rep: &Tensor<F>,
    need_input_grad: bool,
) -> Result<Option<Tensor<F>>> {
    let n = cache.lengths.len();
    if grad_rep.shape() != [n, stack.output_width()] {
        return Err(Error::shape(
            "run_rnn_backward",
            format!("grad {:?}, expected [{n}, {}]", grad_rep.shape(), stack.output_width()),
        ));
    }
    let lengths = &cache.lengths;
    let hd = stack.hidden();
    let mut grad_final = Some(grad_rep.clone());
    let mut grad_outputs: Option<Vec<Tensor<F>>> = None;
    for (layer, lc) in stack.layers.iter_mut().zip(&cache.layers).rev() {
        let zeros = Tensor::zeros(&[n, if layer.backward.is_some() { 2 * hd } else { hd }]);
        let gf = grad_final.take().unwrap_or(zeros);
        let dxs = match (&mut layer.backward, &lc.backward) {
            (None, None) => backward_direction(
                &mut layer.forward,
                &lc.forward,
                lengths,
                grad_outputs.as_deref(),
                &gf,
            ),
            (Some(bcell), Some(bcache)) => {
                let (gf_fwd, gf_bwd) = split_cols(&gf, hd);
                let (go_fwd, go_bwd_aligned): (Option<Vec<_>>, Option<Vec<_>>) = match &grad_outputs {
                    None => (None, None),
                    Some(go) => {
                        let (a, b): (Vec<_>, Vec<_>) = go.iter().map(|g| split_cols(g, hd)).unzip();
                        (Some(a), Some(b))
                    }
                };
                let go_bwd = go_bwd_aligned.map(|g| reverse_within_lengths(&g, lengths));
                let dx_fwd = backward_direction(
                    &mut layer.forward,
                    &lc.forward,
                    lengths,
                    go_fwd.as_deref(),
                    &gf_fwd,
                );
                let dx_bwd_rev =
                    backward_direction(bcell, bcache, lengths, go_bwd.as_deref(), &gf_bwd);
                let dx_bwd = reverse_within_lengths(&dx_bwd_rev, lengths);
                dx_fwd
                    .into_iter()
                    .zip(dx_bwd)
                    .map(|(mut a, b)| {
                        a.add_assign(&b);
                        a
                    })
                    .collect()
            }
            _ => unreachable!("cache built by the same stack"),
        };
        debug_assert!(dxs.iter().all(|t| t.dim(1) == lc.input_width));
        grad_outputs = Some(dxs);
    }
    if !need_input_grad {
        return Ok(None);
    }
    let dxs = grad_outputs.expect("at least one layer");
    let d = cache.layers[0].input_width;
    let mut dseq = Tensor::zeros(&[n, cache.total_steps, d]);
    for (t, dx) in dxs.iter().enumerate().take(cache.active_steps) {
        for i in 0..n {
            let off = (i * cache.total_steps + t) * d;
            dseq.data_mut()[off..off + d].copy_from_slice(dx.row(i));
        }
    }
    Ok(Some(dseq))
}
