//! Acceptance checks for the toolkit. Each check prints one PASS, WARN or
//! FAIL line; the process exits non-zero if any check fails.
//!
//! cargo test --release --test acceptance

use std::collections::BTreeSet;
use std::time::Instant;

use agrisent::corpus::{infuse_validation, shuffle_split, Corpus, LabeledExample, Scheme, SentimentLabel, Source};
use agrisent::embeddings::featurize;
use agrisent::experiments::{
    binary_ternary_comparison, cross_validate, evaluate, fit, median, summarize, to_json, train_run, ExperimentConfig,
    Report,
};
use agrisent::models::{
    average_feature_matrix, model_to_bytes, predict_features, train_baseline, BaselineTraining, ModelKind, ModelSpec,
};
use agrisent::nncore::gradcheck::{grad_check, DEFAULT_EPS};
use agrisent::nncore::ops::{
    affine, affine_backward, conv1d_over_time, conv1d_over_time_backward, max_over_time, max_over_time_backward, relu,
    relu_backward, sigmoid, sigmoid_backward, softmax_cross_entropy, tanh, tanh_backward,
};
use agrisent::nncore::rnn::{
    gru_cell_backward, gru_cell_step, lstm_cell_backward, lstm_cell_step, GruParams, LstmParams, LstmState,
};
use agrisent::nncore::{
    clip_gradients, l2_penalty, l2_penalty_backward, run_rnn, run_rnn_backward, CellKind, Parameter, Purpose,
    RngStream, RnnStack, Tensor,
};
use agrisent::synthetic::{gaussian_blobs, generate, NeutralMode, SyntheticSpec};

enum Outcome {
    Pass,
    Warn,
    Fail,
}

struct Check {
    name: &'static str,
    outcome: Outcome,
    detail: String,
}

fn check(name: &'static str, ok: bool, detail: String) -> Check {
    Check {
        name,
        outcome: if ok { Outcome::Pass } else { Outcome::Fail },
        detail,
    }
}

// ---------------------------------------------------------------- helpers

type T = Tensor<f64>;

fn randn(shape: &[usize], rng: &mut RngStream) -> T {
    Tensor::from_fn(shape, |_| rng.normal())
}

fn dot(a: &T, b: &T) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn with_data(shape: &[usize], v: &[f64]) -> T {
    Tensor::from_vec(shape, v.to_vec()).expect("shape")
}

fn between(rng: &mut RngStream, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

fn flat(params: &[&Parameter<f64>]) -> Vec<f64> {
    params.iter().flat_map(|p| p.value.data().to_vec()).collect()
}

fn flat_grad(params: &[&Parameter<f64>]) -> Vec<f64> {
    params.iter().flat_map(|p| p.grad.data().to_vec()).collect()
}

fn set_values(params: Vec<&mut Parameter<f64>>, v: &[f64]) {
    let mut at = 0;
    for p in params {
        let n = p.value.len();
        p.value.data_mut().copy_from_slice(&v[at..at + n]);
        at += n;
    }
}

fn randomize(params: Vec<&mut Parameter<f64>>, rng: &mut RngStream) {
    for p in params {
        for v in p.value.data_mut() {
            *v = 0.5 * rng.normal();
        }
    }
}

/// Values whose magnitude stays clear of zero, so finite differences never
/// straddle the relu kink.
fn off_kink(shape: &[usize], rng: &mut RngStream) -> T {
    Tensor::from_fn(shape, |_| {
        let m = 0.05 + rng.normal().abs();
        if rng.uniform() < 0.5 {
            -m
        } else {
            m
        }
    })
}

// ------------------------------------------------------- gradient checks

const TRIALS: u64 = 100;
const GRAD_TOL: f64 = 1e-4;

fn trial_rng(op: u64, trial: u64) -> RngStream {
    RngStream::new(op * 1_000_003 + trial, Purpose::Init)
}

fn grad_affine(trial: u64) -> f64 {
    let mut rng = trial_rng(1, trial);
    let (n, di, dout) = (between(&mut rng, 1, 4), between(&mut rng, 1, 5), between(&mut rng, 1, 4));
    let (x, w, b, g) = (
        randn(&[n, di], &mut rng),
        randn(&[di, dout], &mut rng),
        randn(&[dout], &mut rng),
        randn(&[n, dout], &mut rng),
    );
    let mut gw = Tensor::zeros(w.shape());
    let mut gb = Tensor::zeros(b.shape());
    let gx = affine_backward(&x, &w, &g, &mut gw, &mut gb).unwrap();
    let ex = grad_check(|v| dot(&affine(&with_data(x.shape(), v), &w, &b).unwrap(), &g), x.data(), gx.data(), DEFAULT_EPS);
    let ew = grad_check(|v| dot(&affine(&x, &with_data(w.shape(), v), &b).unwrap(), &g), w.data(), gw.data(), DEFAULT_EPS);
    let eb = grad_check(|v| dot(&affine(&x, &w, &with_data(b.shape(), v)).unwrap(), &g), b.data(), gb.data(), DEFAULT_EPS);
    ex.max(ew).max(eb)
}

fn grad_conv(trial: u64) -> f64 {
    let mut rng = trial_rng(2, trial);
    let (n, t, d, f) = (
        between(&mut rng, 1, 3),
        between(&mut rng, 2, 7),
        between(&mut rng, 1, 4),
        between(&mut rng, 1, 4),
    );
    let width = between(&mut rng, 1, t);
    let (x, k, b) = (randn(&[n, t, d], &mut rng), randn(&[width, d, f], &mut rng), randn(&[f], &mut rng));
    let g = randn(&[n, t - width + 1, f], &mut rng);
    let mut gk = Tensor::zeros(k.shape());
    let mut gb = Tensor::zeros(b.shape());
    let gx = conv1d_over_time_backward(&x, &k, &g, &mut gk, &mut gb, true).unwrap().unwrap();
    let conv = |x: &T, k: &T, b: &T| dot(&conv1d_over_time(x, k, b).unwrap(), &g);
    let ex = grad_check(|v| conv(&with_data(x.shape(), v), &k, &b), x.data(), gx.data(), DEFAULT_EPS);
    let ek = grad_check(|v| conv(&x, &with_data(k.shape(), v), &b), k.data(), gk.data(), DEFAULT_EPS);
    let eb = grad_check(|v| conv(&x, &k, &with_data(b.shape(), v)), b.data(), gb.data(), DEFAULT_EPS);
    ex.max(ek).max(eb)
}

fn grad_max_over_time(trial: u64) -> f64 {
    let mut rng = trial_rng(3, trial);
    let (n, t, f) = (between(&mut rng, 1, 3), between(&mut rng, 1, 6), between(&mut rng, 1, 4));
    // Distinct values at least 0.01 apart: no ties within eps.
    let order = rng.permutation(n * t * f);
    let x = Tensor::from_fn(&[n, t, f], |i| order[i] as f64 * 0.01 + 0.001 * rng.uniform());
    let g = randn(&[n, f], &mut rng);
    let (_, argmax) = max_over_time(&x).unwrap();
    let gx = max_over_time_backward(&argmax, t, &g);
    grad_check(|v| dot(&max_over_time(&with_data(x.shape(), v)).unwrap().0, &g), x.data(), gx.data(), DEFAULT_EPS)
}

fn grad_activations(trial: u64) -> f64 {
    let mut rng = trial_rng(4, trial);
    let shape = [between(&mut rng, 1, 4), between(&mut rng, 1, 6)];
    let g = randn(&shape, &mut rng);
    let xr = off_kink(&shape, &mut rng);
    let er = grad_check(|v| dot(&relu(&with_data(&shape, v)), &g), xr.data(), relu_backward(&xr, &g).data(), DEFAULT_EPS);
    let x = randn(&shape, &mut rng);
    let et = grad_check(|v| dot(&tanh(&with_data(&shape, v)), &g), x.data(), tanh_backward(&tanh(&x), &g).data(), DEFAULT_EPS);
    let es = grad_check(
        |v| dot(&sigmoid(&with_data(&shape, v)), &g),
        x.data(),
        sigmoid_backward(&sigmoid(&x), &g).data(),
        DEFAULT_EPS,
    );
    er.max(et).max(es)
}

fn grad_softmax_ce(trial: u64) -> f64 {
    let mut rng = trial_rng(5, trial);
    let (n, c) = (between(&mut rng, 1, 5), between(&mut rng, 2, 5));
    let mut logits = randn(&[n, c], &mut rng);
    logits.scale(2.0);
    let labels: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
    let out = softmax_cross_entropy(&logits, &labels).unwrap();
    grad_check(
        |v| softmax_cross_entropy(&with_data(&[n, c], v), &labels).unwrap().loss,
        logits.data(),
        out.grad.data(),
        DEFAULT_EPS,
    )
}

fn grad_gru_step(trial: u64) -> f64 {
    let mut rng = trial_rng(6, trial);
    let (n, d, h) = (between(&mut rng, 1, 3), between(&mut rng, 1, 4), between(&mut rng, 1, 4));
    let mut p = GruParams::<f64>::zeros("g", d, h);
    randomize(p.params_mut(), &mut rng);
    let (x, h0, g) = (randn(&[n, d], &mut rng), randn(&[n, h], &mut rng), randn(&[n, h], &mut rng));
    let (_, cache) = gru_cell_step(&x, &h0, &p).unwrap();
    let (dx, dh0) = gru_cell_backward(&mut p, &cache, &g);
    let step = |x: &T, h0: &T, p: &GruParams<f64>| dot(&gru_cell_step(x, h0, p).unwrap().0, &g);
    let ex = grad_check(|v| step(&with_data(x.shape(), v), &h0, &p), x.data(), dx.data(), DEFAULT_EPS);
    let eh = grad_check(|v| step(&x, &with_data(h0.shape(), v), &p), h0.data(), dh0.data(), DEFAULT_EPS);
    let ep = grad_check(
        |v| {
            let mut q = p.clone();
            set_values(q.params_mut(), v);
            step(&x, &h0, &q)
        },
        &flat(&p.params()),
        &flat_grad(&p.params()),
        DEFAULT_EPS,
    );
    ex.max(eh).max(ep)
}

fn grad_lstm_step(trial: u64) -> f64 {
    let mut rng = trial_rng(7, trial);
    let (n, d, h) = (between(&mut rng, 1, 3), between(&mut rng, 1, 4), between(&mut rng, 1, 4));
    let mut p = LstmParams::<f64>::zeros("l", d, h);
    randomize(p.params_mut(), &mut rng);
    let x = randn(&[n, d], &mut rng);
    let s0 = LstmState {
        h: randn(&[n, h], &mut rng),
        c: randn(&[n, h], &mut rng),
    };
    let (gh, gc) = (randn(&[n, h], &mut rng), randn(&[n, h], &mut rng));
    let (_, cache) = lstm_cell_step(&x, &s0, &p).unwrap();
    let (dx, dh0, dc0) = lstm_cell_backward(&mut p, &cache, &gh, &gc);
    let step = |x: &T, s: &LstmState<f64>, p: &LstmParams<f64>| {
        let (s1, _) = lstm_cell_step(x, s, p).unwrap();
        dot(&s1.h, &gh) + dot(&s1.c, &gc)
    };
    let ex = grad_check(|v| step(&with_data(x.shape(), v), &s0, &p), x.data(), dx.data(), DEFAULT_EPS);
    let eh = grad_check(
        |v| step(&x, &LstmState { h: with_data(s0.h.shape(), v), c: s0.c.clone() }, &p),
        s0.h.data(),
        dh0.data(),
        DEFAULT_EPS,
    );
    let ec = grad_check(
        |v| step(&x, &LstmState { h: s0.h.clone(), c: with_data(s0.c.shape(), v) }, &p),
        s0.c.data(),
        dc0.data(),
        DEFAULT_EPS,
    );
    let ep = grad_check(
        |v| {
            let mut q = p.clone();
            set_values(q.params_mut(), v);
            step(&x, &s0, &q)
        },
        &flat(&p.params()),
        &flat_grad(&p.params()),
        DEFAULT_EPS,
    );
    ex.max(eh).max(ec).max(ep)
}

fn random_stack(rng: &mut RngStream, cell: CellKind, input: usize) -> RnnStack<f64> {
    let hidden = between(rng, 1, 3);
    let bidirectional = rng.uniform() < 0.5;
    let layers = between(rng, 1, 2);
    let mut stack = RnnStack::<f64>::init(cell, input, hidden, bidirectional, layers, rng);
    randomize(stack.params_mut(), rng);
    stack
}

fn grad_bptt(trial: u64, cell: CellKind) -> f64 {
    let mut rng = trial_rng(if cell == CellKind::Gru { 8 } else { 9 }, trial);
    let (n, d, t) = (between(&mut rng, 1, 3), between(&mut rng, 1, 3), 5);
    let mut stack = random_stack(&mut rng, cell, d);
    let seq = randn(&[n, t, d], &mut rng);
    let mut lengths: Vec<usize> = (0..n).map(|_| between(&mut rng, 1, t)).collect();
    lengths[0] = t;
    let g = randn(&[n, stack.output_width()], &mut rng);
    let (_, cache) = run_rnn(&seq, &lengths, &stack).unwrap();
    for p in stack.params_mut() {
        p.zero_grad();
    }
    let dseq = run_rnn_backward(&mut stack, &cache, &g, true).unwrap().unwrap();
    let rep = |seq: &T, s: &RnnStack<f64>| dot(&run_rnn(seq, &lengths, s).unwrap().0, &g);
    let es = grad_check(|v| rep(&with_data(seq.shape(), v), &stack), seq.data(), dseq.data(), DEFAULT_EPS);
    let ep = grad_check(
        |v| {
            let mut s = stack.clone();
            set_values(s.params_mut(), v);
            rep(&seq, &s)
        },
        &flat(&stack.params()),
        &flat_grad(&stack.params()),
        DEFAULT_EPS,
    );
    es.max(ep)
}

fn grad_l2(trial: u64) -> f64 {
    let mut rng = trial_rng(10, trial);
    let count = between(&mut rng, 1, 4);
    let mut params: Vec<Parameter<f64>> = (0..count)
        .map(|i| {
            let p = Parameter::new(format!("p{i}"), randn(&[between(&mut rng, 1, 3), between(&mut rng, 1, 4)], &mut rng));
            if i == 0 || rng.uniform() < 0.5 {
                p.regularized()
            } else {
                p
            }
        })
        .collect();
    let lambda = 10f64.powf(-3.0 * rng.uniform());
    {
        let mut refs: Vec<&mut Parameter<f64>> = params.iter_mut().collect();
        l2_penalty_backward(&mut refs, lambda);
    }
    let refs: Vec<&Parameter<f64>> = params.iter().collect();
    grad_check(
        |v| {
            let mut q = params.clone();
            set_values(q.iter_mut().collect(), v);
            l2_penalty(&q.iter().collect::<Vec<_>>(), lambda)
        },
        &flat(&refs),
        &flat_grad(&refs),
        DEFAULT_EPS,
    )
}

fn gradient_correctness() -> Check {
    let started = Instant::now();
    let ops: Vec<(&str, Box<dyn Fn(u64) -> f64>)> = vec![
        ("affine", Box::new(grad_affine)),
        ("conv1d_over_time", Box::new(grad_conv)),
        ("max_over_time", Box::new(grad_max_over_time)),
        ("relu/tanh/sigmoid", Box::new(grad_activations)),
        ("softmax_cross_entropy", Box::new(grad_softmax_ce)),
        ("gru_step", Box::new(grad_gru_step)),
        ("lstm_step", Box::new(grad_lstm_step)),
        ("gru_bptt_5", Box::new(|t| grad_bptt(t, CellKind::Gru))),
        ("lstm_bptt_5", Box::new(|t| grad_bptt(t, CellKind::Lstm))),
        ("l2_penalty", Box::new(grad_l2)),
    ];
    let mut worst = Vec::new();
    for (name, op) in &ops {
        let e = (0..TRIALS).map(op).fold(0.0, f64::max);
        worst.push((name.to_string(), e));
    }
    let secs = started.elapsed().as_secs_f64();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let listing: Vec<String> = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    check(
        "gradient correctness",
        max < GRAD_TOL && secs < 60.0,
        format!("{TRIALS} trials per op, max rel err {max:.2e} (< {GRAD_TOL:.0e}), {secs:.1}s; {}", listing.join(", ")),
    )
}

// ----------------------------------------------------- overfit / held-out

fn overfit_reproduction() -> Check {
    let started = Instant::now();
    let seed = 42;
    let data = generate(&SyntheticSpec::default()).unwrap();
    let (train, held_out) = shuffle_split(&data.corpus, 0.2, seed).unwrap();
    let config = ExperimentConfig {
        epochs: 30,
        seed,
        ..ExperimentConfig::default()
    };
    let (model, history) = fit(&config, &data.table, &train).unwrap();
    let first_95 = history
        .iter()
        .find(|h| h.train_accuracy.unwrap_or(0.0) >= 0.95)
        .map(|h| h.epoch);
    let held = evaluate(&model, &data.table, &held_out).unwrap().accuracy;
    let secs = started.elapsed().as_secs_f64();
    check(
        "overfit reproduction",
        first_95.is_some_and(|e| e <= 30) && held >= 0.85 && secs < 120.0,
        format!(
            "train >= 95% first at epoch {first_95:?}, held-out 20% ({} examples) {held:.4} (>= 0.85), {secs:.1}s",
            held_out.len()
        ),
    )
}

/// Same protocol on other generator/training seeds, reported but not judged.
fn overfit_seed_survey() -> String {
    let mut accs = Vec::new();
    for seed in 43..=49 {
        let data = generate(&SyntheticSpec {
            seed,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let (train, held_out) = shuffle_split(&data.corpus, 0.2, seed).unwrap();
        let config = ExperimentConfig {
            epochs: 30,
            seed,
            ..ExperimentConfig::default()
        };
        let (model, _) = fit(&config, &data.table, &train).unwrap();
        accs.push(evaluate(&model, &data.table, &held_out).unwrap().accuracy);
    }
    let listing: Vec<String> = accs.iter().map(|a| format!("{a:.3}")).collect();
    format!(
        "INFO overfit reproduction, seeds 43-49: held-out [{}], median {:.3}, {}/{} >= 0.85",
        listing.join(", "),
        median(&accs),
        accs.iter().filter(|&&a| a >= 0.85).count(),
        accs.len()
    )
}

// ---------------------------------------------------- binary vs ternary

fn binary_at_least_ternary() -> Check {
    let mut ternary = Vec::new();
    let mut binary = Vec::new();
    for seed in [1, 2, 3] {
        let data = generate(&SyntheticSpec {
            neutral: NeutralMode::PolarMixture,
            seed,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let config = ExperimentConfig {
            epochs: 20,
            seed,
            ..ExperimentConfig::default()
        };
        let cmp = binary_ternary_comparison(&config, &data.table, &data.corpus).unwrap();
        ternary.push(cmp.ternary.test_accuracy);
        binary.push(cmp.binary.test_accuracy);
    }
    let (mt, mb) = (median(&ternary), median(&binary));
    check(
        "binary >= ternary",
        mb >= mt,
        format!("median over seeds 1-3: binary {mb:.4} vs ternary {mt:.4} (ternary {ternary:.3?}, binary {binary:.3?})"),
    )
}

// -------------------------------------------------------------- clipping

fn norm(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn adversarial_grads(rng: &mut RngStream, case: u64) -> Vec<Vec<f64>> {
    let count = between(rng, 1, 5);
    let mut grads: Vec<Vec<f64>> = (0..count).map(|_| vec![0.0; between(rng, 1, 64)]).collect();
    match case % 5 {
        // One huge coordinate, everything else tiny.
        0 => {
            for g in grads.iter_mut() {
                for v in g.iter_mut() {
                    *v = 1e-9 * rng.normal();
                }
            }
            let i = rng.below(grads.len());
            let j = rng.below(grads[i].len());
            grads[i][j] = if rng.uniform() < 0.5 { 1.0 } else { -1.0 };
        }
        // All coordinates equal.
        1 => {
            for g in grads.iter_mut() {
                g.fill(1.0);
            }
        }
        // Widely varying magnitudes.
        2 => {
            for g in grads.iter_mut() {
                for v in g.iter_mut() {
                    *v = rng.normal() * 10f64.powf(6.0 * rng.uniform() - 3.0);
                }
            }
        }
        _ => {
            for g in grads.iter_mut() {
                for v in g.iter_mut() {
                    *v = rng.normal();
                }
            }
        }
    }
    // Rescale to a target norm, log-uniform in [1e-2, 1e6], with some cases
    // right at the threshold.
    let target = match case % 7 {
        0 => 5.0,
        1 => 5.0 * (1.0 + 1e-12),
        2 => 1e6,
        _ => 10f64.powf(8.0 * rng.uniform() - 2.0),
    };
    let all: Vec<f64> = grads.iter().flatten().copied().collect();
    let s = target / norm(&all);
    for g in grads.iter_mut() {
        for v in g.iter_mut() {
            *v *= s;
        }
    }
    grads
}

fn clip_case<F: agrisent::nncore::Scalar>(grads: &[Vec<f64>], max_norm: f64) -> (f64, f64, f64, bool) {
    let mut params: Vec<Parameter<F>> = grads
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut p = Parameter::<F>::zeros(format!("p{i}"), &[g.len()]);
            for (dst, &src) in p.grad.data_mut().iter_mut().zip(g) {
                *dst = F::of(src);
            }
            p
        })
        .collect();
    let before: Vec<f64> = params.iter().flat_map(|p| p.grad.data().iter().map(|v| v.as_f64())).collect();
    {
        let mut refs: Vec<&mut Parameter<F>> = params.iter_mut().collect();
        clip_gradients(&mut refs, max_norm).unwrap();
    }
    let after: Vec<f64> = params.iter().flat_map(|p| p.grad.data().iter().map(|v| v.as_f64())).collect();
    let (nb, na) = (norm(&before), norm(&after));
    let cos = before.iter().zip(&after).map(|(a, b)| a * b).sum::<f64>() / (nb * na);
    (nb, na, cos, before == after)
}

fn clipping_contract() -> Check {
    let max_norm = 5.0;
    let mut rng = RngStream::new(4, Purpose::Init);
    let (mut worst_norm, mut worst_cos, mut max_pre) = (0.0f64, 0.0f64, 0.0f64);
    let mut untouched_ok = true;
    let cases = 2000u64;
    for case in 0..cases {
        let grads = adversarial_grads(&mut rng, case);
        for r in [clip_case::<f64>(&grads, max_norm), clip_case::<f32>(&grads, max_norm)] {
            let (pre, post, cos, untouched) = r;
            max_pre = max_pre.max(pre);
            worst_norm = worst_norm.max(post);
            worst_cos = worst_cos.max((cos - 1.0).abs());
            // Norms within rounding of the threshold may be scaled by 1 - ulp.
            if pre < max_norm * (1.0 - 1e-12) && !untouched {
                untouched_ok = false;
            }
        }
    }
    check(
        "clipping contract",
        worst_norm <= max_norm * (1.0 + 1e-6) && worst_cos <= 1e-9 && untouched_ok,
        format!(
            "{cases} cases x (f64, f32), pre-clip norms up to {max_pre:.1e}: max post-clip norm {worst_norm:.9}, \
             max |cos - 1| {worst_cos:.1e}, under-threshold gradients untouched: {untouched_ok}"
        ),
    )
}

// ---------------------------------------------------------- CV statistics

/// Brute force: the permutation of the triple that is non-decreasing, then
/// the inclusive-interpolation quartiles at positions 0.5 and 1.5.
fn oracle_stats(v: [f64; 3]) -> (f64, f64) {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let s = PERMS
        .iter()
        .map(|p| [v[p[0]], v[p[1]], v[p[2]]])
        .find(|s| s[0] <= s[1] && s[1] <= s[2])
        .expect("some ordering is sorted");
    let q1 = s[0] + (s[1] - s[0]) * 0.5;
    let q3 = s[1] + (s[2] - s[1]) * 0.5;
    (s[1], q3 - q1)
}

fn cv_statistics_oracle() -> Check {
    let mut rng = RngStream::new(5, Purpose::Init);
    let config = ExperimentConfig::default();
    let mut mismatches = 0;
    let mut closed_form_gap = 0.0f64;
    for i in 0..1000 {
        let triple: [f64; 3] = match i % 3 {
            // Accuracies as k / n like real folds, ties likely.
            0 => {
                let n = between(&mut rng, 1, 30) as f64;
                [0, 1, 2].map(|_| between(&mut rng, 0, n as usize) as f64 / n)
            }
            1 => [0, 1, 2].map(|_| rng.uniform()),
            _ => {
                let a = rng.uniform();
                [a, if rng.uniform() < 0.5 { a } else { rng.uniform() }, a]
            }
        };
        let summary = summarize(&config, triple.to_vec());
        let (m, iqr) = oracle_stats(triple);
        if summary.median.to_bits() != m.to_bits() || summary.iqr.to_bits() != iqr.to_bits() {
            mismatches += 1;
        }
        let mut s = triple;
        s.sort_by(f64::total_cmp);
        closed_form_gap = closed_form_gap.max((iqr - (s[2] - s[0]) / 2.0).abs());
    }

    // One real cross-validation run goes through the same summary.
    let data = generate(&SyntheticSpec {
        examples: 120,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let cv_config = ExperimentConfig {
        epochs: 2,
        ..ExperimentConfig::default()
    };
    let (summary, _) = cross_validate(&cv_config, &data.table, &data.corpus).unwrap();
    let folds: [f64; 3] = summary.fold_accuracies.clone().try_into().unwrap();
    let (m, iqr) = oracle_stats(folds);
    let cv_ok = summary.median.to_bits() == m.to_bits() && summary.iqr.to_bits() == iqr.to_bits();
    check(
        "cv statistics oracle",
        mismatches == 0 && cv_ok,
        format!(
            "1000 triples, {mismatches} bitwise mismatches; cross_validate folds {:?} -> median {}, IQR {} \
             (oracle agrees: {cv_ok}); max gap to (max-min)/2 {closed_form_gap:.1e}",
            summary.fold_accuracies, summary.median, summary.iqr
        ),
    )
}

// ------------------------------------------------------ split arithmetic

fn id_corpus(prefix: &str, n: usize, source: Source) -> Corpus {
    Corpus::new(
        Scheme::Ternary,
        (0..n)
            .map(|i| LabeledExample::new(vec![format!("{prefix}{i}")], SentimentLabel::new(Scheme::Ternary, i % 3).unwrap(), source))
            .collect(),
    )
    .unwrap()
}

fn ids(c: &Corpus) -> Vec<String> {
    c.examples().iter().map(|e| e.tokens[0].clone()).collect()
}

/// `round(n * k / 100)`, halves up, in integers.
fn round_pct(n: usize, k: usize) -> usize {
    (2 * n * k + 100) / 200
}

fn disjoint_union(parts: &[&[String]], whole: &[String]) -> bool {
    let mut all: Vec<&String> = parts.iter().flat_map(|p| p.iter()).collect();
    let total = all.len();
    all.sort();
    all.dedup();
    let union: BTreeSet<&String> = all.iter().copied().collect();
    let whole: BTreeSet<&String> = whole.iter().collect();
    total == all.len() && union == whole
}

fn split_arithmetic() -> Check {
    let mut rng = RngStream::new(6, Purpose::Init);
    let mut failures = Vec::new();
    let (mut split_ok, mut infuse_ok, mut expected_errors) = (0, 0, 0);
    for case in 0..200 {
        let seed = rng.below(1 << 30) as u64;
        // shuffle_split
        let n = between(&mut rng, 1, 300);
        let k = between(&mut rng, 1, 99);
        let corpus = id_corpus("s", n, Source::GD);
        let want = round_pct(n, k);
        match shuffle_split(&corpus, k as f64 / 100.0, seed) {
            Ok((train, test)) => {
                let ok = want >= 1
                    && want < n
                    && test.len() == want
                    && train.len() == n - want
                    && disjoint_union(&[&ids(&train), &ids(&test)], &ids(&corpus));
                if ok {
                    split_ok += 1;
                } else {
                    failures.push(format!("case {case}: shuffle_split n={n} f={k}%"));
                }
            }
            Err(_) if n < 2 || want == 0 || want >= n => expected_errors += 1,
            Err(e) => failures.push(format!("case {case}: shuffle_split n={n} f={k}%: {e}")),
        }

        // infuse_validation
        let (ns, nt) = (between(&mut rng, 1, 400), between(&mut rng, 1, 200));
        let (fk, tk) = (between(&mut rng, 0, 100), between(&mut rng, 1, 99));
        let val_size = between(&mut rng, 1, 100);
        let source = id_corpus("src", ns, Source::GD);
        let target = id_corpus("ag", nt, Source::AG);
        let vft = round_pct(val_size, fk).min(val_size);
        let min_test = round_pct(nt, tk).max(1);
        let feasible = vft + min_test <= nt && val_size - vft < ns;
        match infuse_validation(&source, &target, fk as f64 / 100.0, tk as f64 / 100.0, val_size, seed) {
            Ok(s) => {
                let val_ids = ids(&s.val);
                let (from_target, from_source): (Vec<String>, Vec<String>) =
                    val_ids.iter().cloned().partition(|id| id.starts_with("ag"));
                let ok = feasible
                    && s.val.len() == val_size
                    && s.val_from_target == vft
                    && s.val_from_source == val_size - vft
                    && from_target.len() == vft
                    && s.test.len() == nt - vft
                    && s.test.len() >= min_test
                    && s.train.len() == ns - (val_size - vft)
                    && disjoint_union(&[&ids(&s.train), &from_source], &ids(&source))
                    && disjoint_union(&[&from_target, &ids(&s.test)], &ids(&target));
                if ok {
                    infuse_ok += 1;
                } else {
                    failures.push(format!("case {case}: infuse ns={ns} nt={nt} f={fk}% t={tk}% v={val_size}"));
                }
            }
            Err(_) if !feasible => expected_errors += 1,
            Err(e) => failures.push(format!("case {case}: infuse ns={ns} nt={nt} f={fk}% t={tk}% v={val_size}: {e}")),
        }
    }
    check(
        "split/infusion arithmetic",
        failures.is_empty(),
        format!(
            "200 cases: {split_ok} splits and {infuse_ok} infusions verified, {expected_errors} infeasible inputs rejected{}",
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join("; ")) }
        ),
    )
}

// ------------------------------------------------------------ determinism

fn determinism() -> Check {
    let data = generate(&SyntheticSpec::default()).unwrap();
    let (rest, test) = shuffle_split(&data.corpus, 0.2, 1).unwrap();
    let (train, dev) = shuffle_split(&rest, 0.1, 2).unwrap();
    let configs = [
        ExperimentConfig {
            epochs: 4,
            seed: 9,
            ..ExperimentConfig::default()
        },
        ExperimentConfig {
            epochs: 3,
            seed: 9,
            model: ModelSpec::rnn(CellKind::Lstm, true, false, 32),
            ..ExperimentConfig::default()
        },
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for config in &configs {
        let run = || {
            let (m, r) = train_run(config, &data.table, &train, &dev, &test).unwrap();
            (model_to_bytes(&m), to_json(&[Report::Run(r.without_timing())]).unwrap())
        };
        let (a_bytes, a_json) = run();
        let (b_bytes, b_json) = run();
        let same = a_bytes == b_bytes && a_json == b_json;
        ok &= same;
        notes.push(format!("{}: {} model bytes, identical {same}", config.model.kind, a_bytes.len()));
    }
    check("determinism", ok, notes.join("; "))
}

// ---------------------------------------------------------- RNN oracle

fn rnn_compositional_oracle() -> Check {
    let mut rng = RngStream::new(8, Purpose::Init);
    let mut chain_ok = true;
    for cell in [CellKind::Gru, CellKind::Lstm] {
        for _ in 0..20 {
            let (n, d, h) = (between(&mut rng, 1, 4), between(&mut rng, 1, 5), between(&mut rng, 1, 5));
            let mut stack = RnnStack::<f64>::init(cell, d, h, false, 1, &mut rng);
            randomize(stack.params_mut(), &mut rng);
            let seq = randn(&[n, 3, d], &mut rng);
            let step = |t: usize| Tensor::from_fn(&[n, d], |i| seq.data()[((i / d) * 3 + t) * d + i % d]);
            let (rep, _) = run_rnn(&seq, &vec![3; n], &stack).unwrap();
            let chained = match &stack.layers[0].forward {
                agrisent::nncore::rnn::CellParams::Gru(p) => {
                    let mut state = Tensor::zeros(&[n, h]);
                    for t in 0..3 {
                        state = gru_cell_step(&step(t), &state, p).unwrap().0;
                    }
                    state
                }
                agrisent::nncore::rnn::CellParams::Lstm(p) => {
                    let mut state = LstmState::zeros(n, h);
                    for t in 0..3 {
                        state = lstm_cell_step(&step(t), &state, p).unwrap().0;
                    }
                    state.h
                }
            };
            chain_ok &= rep == chained;
        }
    }

    let mut pad_ok = 0;
    for _ in 0..100 {
        let cell = if rng.uniform() < 0.5 { CellKind::Gru } else { CellKind::Lstm };
        let (n, d) = (between(&mut rng, 1, 4), between(&mut rng, 1, 4));
        let stack = random_stack(&mut rng, cell, d);
        let t_short = between(&mut rng, 1, 6);
        let t_long = t_short + between(&mut rng, 1, 6);
        let lengths: Vec<usize> = (0..n).map(|_| between(&mut rng, 1, t_short)).collect();
        let a = randn(&[n, t_short, d], &mut rng);
        let mut b = randn(&[n, t_long, d], &mut rng);
        for i in 0..n {
            for t in 0..lengths[i] {
                for k in 0..d {
                    b.data_mut()[(i * t_long + t) * d + k] = a.data()[(i * t_short + t) * d + k];
                }
            }
        }
        let ra = run_rnn(&a, &lengths, &stack).unwrap().0;
        let rb = run_rnn(&b, &lengths, &stack).unwrap().0;
        if ra == rb {
            pad_ok += 1;
        }
    }
    check(
        "rnn compositional oracle",
        chain_ok && pad_ok == 100,
        format!("3-step chains (GRU, LSTM; 40 cases) bit-identical: {chain_ok}; pad invariance {pad_ok}/100"),
    )
}

// --------------------------------------------------------- relative speed

fn relative_speed() -> Check {
    let data = generate(&SyntheticSpec::default()).unwrap();
    let (rest, test) = shuffle_split(&data.corpus, 0.2, 1).unwrap();
    let (train, dev) = shuffle_split(&rest, 0.1, 2).unwrap();
    let time = |config: ExperimentConfig| {
        let (_, r) = train_run(&config, &data.table, &train, &dev, &test).unwrap();
        median(&r.epoch_seconds)
    };
    let cnn = time(ExperimentConfig {
        epochs: 5,
        ..ExperimentConfig::default()
    });
    let lstm = time(ExperimentConfig {
        epochs: 5,
        model: ModelSpec::rnn(CellKind::Lstm, true, false, 128),
        ..ExperimentConfig::default()
    });
    let detail = format!("median epoch: textcnn {cnn:.4}s, bi-LSTM H=128 {lstm:.4}s, ratio {:.2}", lstm / cnn);
    Check {
        name: "relative speed",
        outcome: if cnn < lstm {
            Outcome::Pass
        } else if cnn < 2.0 * lstm {
            Outcome::Warn
        } else {
            Outcome::Fail
        },
        detail,
    }
}

// ----------------------------------------------------------- baselines

fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    predicted.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / labels.len() as f64
}

fn baseline_sanity() -> Check {
    let data = generate(&SyntheticSpec::default()).unwrap();
    let (train, held_out) = shuffle_split(&data.corpus, 0.2, 42).unwrap();
    let features = |c: &Corpus| {
        let ex = featurize(c, &data.table, 52).unwrap();
        average_feature_matrix(&ex.iter().collect::<Vec<_>>(), &data.table)
    };
    let (xtr, xte) = (features(&train), features(&held_out));
    let opts = BaselineTraining::default();
    let dense = train_baseline(ModelKind::DenseNN, &xtr, &train.labels(), &opts).unwrap();
    let dense_acc = accuracy(&predict_features(&dense, &xte).unwrap().0, &held_out.labels());
    let counts = train.class_counts();
    let majority_class = (0..counts.len()).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap();
    let majority = held_out.labels().iter().filter(|&&y| y == majority_class).count() as f64 / held_out.len() as f64;

    let (blobs, blob_labels) = gaussian_blobs(3, 50, 8, 6.0, 3);
    let linear: Vec<(ModelKind, f64)> = [ModelKind::LogReg, ModelKind::LinearSVM]
        .into_iter()
        .map(|k| {
            let m = train_baseline(k, &blobs, &blob_labels, &opts).unwrap();
            (k, accuracy(&predict_features(&m, &blobs).unwrap().0, &blob_labels))
        })
        .collect();
    check(
        "baseline sanity",
        dense_acc >= majority + 0.20 && linear.iter().all(|(_, a)| *a == 1.0),
        format!(
            "densenn held-out {dense_acc:.4} vs majority {majority:.4} (+{:.1}pp, need +20); separable blobs train: {}",
            100.0 * (dense_acc - majority),
            linear.iter().map(|(k, a)| format!("{k} {a:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn main() {
    let started = Instant::now();
    let checks: Vec<fn() -> Check> = vec![
        gradient_correctness,
        overfit_reproduction,
        binary_at_least_ternary,
        clipping_contract,
        cv_statistics_oracle,
        split_arithmetic,
        determinism,
        rnn_compositional_oracle,
        relative_speed,
        baseline_sanity,
    ];
    let mut failed = 0;
    for (i, run) in checks.iter().enumerate() {
        let c = run();
        let tag = match c.outcome {
            Outcome::Pass => "PASS",
            Outcome::Warn => "WARN",
            Outcome::Fail => {
                failed += 1;
                "FAIL"
            }
        };
        println!("{tag} [{:>2}] {}: {}", i + 1, c.name, c.detail);
    }
    println!("{}", overfit_seed_survey());
    println!(
        "acceptance: {} of {} passed in {:.1}s",
        checks.len() - failed,
        checks.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
