//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use har_core::domain::{AccelSample, LabeledWindow, SelfReport, UserId, GRID_STEP_MS};
use har_core::ingest::UserTimeline;
use har_core::neuralnet::{InputBatch, Layer, NetworkSpec, NetworkState};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mean over (positive, negative) pairs of 1 / 0.5 / 0 for win / tie / loss.
pub fn pairwise_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1;
            total += if scores[i] > scores[j] {
                1.0
            } else if scores[i] == scores[j] {
                0.5
            } else {
                0.0
            };
        }
    }
    total / pairs as f64
}

/// Textbook loop convolution; weights laid out `[out][in][k]`.
pub fn direct_conv1d(x: &Array2<f64>, weight: &[f64], bias: &[f64], out_ch: usize, kernel: usize, stride: usize) -> Array2<f64> {
    let (in_ch, len) = x.dim();
    let out_len = (len - kernel) / stride + 1;
    Array2::from_shape_fn((out_ch, out_len), |(o, j)| {
        let mut acc = bias[o];
        for c in 0..in_ch {
            for k in 0..kernel {
                acc += weight[(o * in_ch + c) * kernel + k] * x[[c, j * stride + k]];
            }
        }
        acc
    })
}

/// Straightforward per-sample forward pass returning the pre-sigmoid logit.
pub fn reference_logit(state: &NetworkState, x: &Array2<f64>) -> f64 {
    let mut a = x.clone();
    let layout = state.param_layout();
    for (layer, slot) in state.spec().layers.iter().zip(layout) {
        let params = |s: &har_core::neuralnet::ParamSlot| {
            (
                &state.params[s.weight_offset..s.weight_offset + s.weight_len],
                &state.params[s.bias_offset..s.bias_offset + s.bias_len],
            )
        };
        a = match *layer {
            Layer::Conv1d { out_channels, kernel_size, stride, .. } => {
                let (w, b) = params(slot.as_ref().unwrap());
                direct_conv1d(&a, w, b, out_channels, kernel_size, stride)
            }
            Layer::Relu => a.mapv(|v| v.max(0.0)),
            Layer::MaxPool1d { width } => {
                let (c, l) = a.dim();
                Array2::from_shape_fn((c, l / width), |(ch, j)| {
                    (0..width).map(|k| a[[ch, j * width + k]]).fold(f64::NEG_INFINITY, f64::max)
                })
            }
            Layer::GlobalAveragePool => {
                let (c, l) = a.dim();
                Array2::from_shape_fn((c, 1), |(ch, _)| a.row(ch).sum() / l as f64)
            }
            Layer::Dense { in_dim, out_dim } => {
                let (w, b) = params(slot.as_ref().unwrap());
                let flat: Vec<f64> = a.iter().copied().collect(); // row-major = channel-major
                assert_eq!(flat.len(), in_dim);
                Array2::from_shape_fn((out_dim, 1), |(o, _)| {
                    b[o] + (0..in_dim).map(|i| w[o * in_dim + i] * flat[i]).sum::<f64>()
                })
            }
            Layer::Sigmoid => break,
        };
    }
    assert_eq!(a.len(), 1);
    a[[0, 0]]
}

/// Mean BCE computed from scratch (no clamping needed away from saturation).
pub fn reference_loss(state: &NetworkState, xs: &[Array2<f64>], labels: &[f64]) -> f64 {
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(labels) {
        let p = 1.0 / (1.0 + (-reference_logit(state, x)).exp());
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    total / xs.len() as f64
}

pub fn batch(xs: &[Array2<f64>]) -> InputBatch {
    InputBatch::from_samples(xs.iter().map(|x| x.view())).unwrap()
}

/// Relative error with a floor on the denominator so that gradients that are
/// zero up to rounding compare on an absolute scale.
pub const GRAD_REL_FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_REL_FLOOR)
}

/// Worst relative error between analytic gradients and central differences
/// of the reference loss, with step `h`.
pub fn gradient_check(state: &NetworkState, xs: &[Array2<f64>], labels: &[f64], h: f64) -> f64 {
    let (_, grads) = state.loss_and_grads(&batch(xs), labels).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..state.params.len() {
        let mut plus = state.clone();
        plus.params[i] += h;
        let mut minus = state.clone();
        minus.params[i] -= h;
        let numeric = (reference_loss(&plus, xs, labels) - reference_loss(&minus, xs, labels)) / (2.0 * h);
        worst = worst.max(rel_err(grads.0[i], numeric));
    }
    worst
}

/// A random small spec on 3×20 input, drawn from a few templates with random sizes.
pub fn random_small_spec(rng: &mut ChaCha8Rng) -> NetworkSpec {
    let c1 = rng.random_range(1..=4);
    let k1 = rng.random_range(1..=5);
    let s1 = rng.random_range(1..=2);
    let l1 = (20 - k1) / s1 + 1;
    let layers = match rng.random_range(0..4) {
        0 => vec![
            Layer::Conv1d { in_channels: 3, out_channels: c1, kernel_size: k1, stride: s1 },
            Layer::Relu,
            Layer::GlobalAveragePool,
            Layer::Dense { in_dim: c1, out_dim: 1 },
        ],
        1 => {
            let c2 = rng.random_range(1..=3);
            let l2 = l1 / 2;
            let k2 = rng.random_range(1..=l2.min(3));
            vec![
                Layer::Conv1d { in_channels: 3, out_channels: c1, kernel_size: k1, stride: s1 },
                Layer::Relu,
                Layer::MaxPool1d { width: 2 },
                Layer::Conv1d { in_channels: c1, out_channels: c2, kernel_size: k2, stride: 1 },
                Layer::Relu,
                Layer::GlobalAveragePool,
                Layer::Dense { in_dim: c2, out_dim: 1 },
            ]
        }
        2 => vec![
            Layer::Conv1d { in_channels: 3, out_channels: c1, kernel_size: k1, stride: s1 },
            Layer::MaxPool1d { width: 2 },
            Layer::Dense { in_dim: c1 * (l1 / 2), out_dim: 1 },
        ],
        _ => {
            let hidden = rng.random_range(1..=5);
            vec![
                Layer::Dense { in_dim: 60, out_dim: hidden },
                Layer::Relu,
                Layer::Dense { in_dim: hidden, out_dim: 1 },
            ]
        }
    };
    let mut layers = layers;
    layers.push(Layer::Sigmoid);
    NetworkSpec { input_channels: 3, input_length: 20, layers }
}

/// Replaces zero biases with random ones. With zero biases a ReLU whose
/// inputs are all zero sits exactly on its kink, where finite differences
/// and the analytic derivative legitimately disagree.
pub fn randomize_biases(state: &mut NetworkState, rng: &mut ChaCha8Rng) {
    for slot in state.param_layout().to_vec().into_iter().flatten() {
        for b in &mut state.params[slot.bias_offset..slot.bias_offset + slot.bias_len] {
            *b = rng.random_range(-0.5..0.5);
        }
    }
}

pub fn random_inputs(rng: &mut ChaCha8Rng, n: usize, channels: usize, length: usize) -> Vec<Array2<f64>> {
    (0..n)
        .map(|_| Array2::from_shape_fn((channels, length), |_| rng.random_range(-1.0..1.0)))
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sample(user: &str, t: i64, v: [f64; 3]) -> AccelSample {
    AccelSample::new(UserId::new(user), t, v[0], v[1], v[2]).unwrap()
}

pub fn report(user: &str, id: &str, fill_start: i64, activity: &str) -> SelfReport {
    SelfReport::new(UserId::new(user), id, fill_start, fill_start + 20_000, activity, None).unwrap()
}

/// One sample on every grid point in `[from, to)`, with values `f(t)`.
pub fn grid_samples(user: &str, from: i64, to: i64, f: impl Fn(i64) -> [f64; 3]) -> Vec<AccelSample> {
    (from..to).step_by(GRID_STEP_MS as usize).map(|t| sample(user, t, f(t))).collect()
}

pub fn timeline(user: &str, samples: Vec<AccelSample>, reports: Vec<SelfReport>) -> UserTimeline {
    UserTimeline { user_id: UserId::new(user), samples, reports }
}

/// A labeled window of zeros; enough for split and task tests.
pub fn blank_window(user: &str, report: &str, label: har_core::domain::ActivityClass) -> LabeledWindow {
    LabeledWindow {
        user_id: UserId::new(user),
        report_id: report.to_string(),
        grid_start_ms: 0,
        data: Array2::zeros((3, 600)),
        label,
    }
}
