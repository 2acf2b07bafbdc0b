mod common;

use common::*;
use har_core::neuralnet::{init_network, AdamHyper, Gradients, Layer, NetworkSpec, NetworkState};
use ndarray::Array2;

fn spec(input_length: usize, layers: Vec<Layer>) -> NetworkSpec {
    NetworkSpec { input_channels: 3, input_length, layers }
}

#[test]
fn averaging_filter_matches_direct_convolution() {
    let s = spec(
        10,
        vec![
            Layer::Conv1d { in_channels: 3, out_channels: 1, kernel_size: 3, stride: 1 },
            Layer::GlobalAveragePool,
            Layer::Dense { in_dim: 1, out_dim: 1 },
            Layer::Sigmoid,
        ],
    );
    let mut state = NetworkState::zeroed(s).unwrap();
    let conv = state.param_layout()[0].unwrap();
    state.params[conv.weight_offset..conv.weight_offset + 9].fill(1.0 / 3.0);
    let dense = state.param_layout()[2].unwrap();
    state.params[dense.weight_offset] = 1.0;

    // Constant channels 1, 2, 3: every output is (1+2+3) since each channel's
    // three taps of 1/3 sum to its value.
    let x = Array2::from_shape_fn((3, 10), |(c, _)| c as f64 + 1.0);
    let direct = direct_conv1d(&x, &[1.0 / 3.0; 9], &[0.0], 1, 3, 1);
    assert!(direct.iter().all(|v| (v - 6.0).abs() < 1e-12));
    let logit = state.logits(&batch(&[x])).unwrap()[0];
    assert!((logit - 6.0).abs() < 1e-12);
}

#[test]
fn forward_matches_reference_on_reference_architecture() {
    let state = init_network(&NetworkSpec::reference(), 17).unwrap();
    let xs = random_inputs(&mut rng(1), 7, 3, 600);
    let logits = state.logits(&batch(&xs)).unwrap();
    assert_eq!(logits.len(), 7);
    for (x, l) in xs.iter().zip(&logits) {
        assert!((reference_logit(&state, x) - l).abs() < 1e-10);
    }
    let probs = state.forward(&batch(&xs)).unwrap();
    assert_eq!(probs.len(), 7);
    assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
    // Pure: repeated calls are bit-identical.
    assert_eq!(probs, state.forward(&batch(&xs)).unwrap());
}

#[test]
fn init_bounds_and_shapes() {
    let s = spec(
        20,
        vec![
            Layer::Conv1d { in_channels: 3, out_channels: 8, kernel_size: 5, stride: 1 },
            Layer::GlobalAveragePool,
            Layer::Dense { in_dim: 8, out_dim: 4 },
            Layer::Dense { in_dim: 4, out_dim: 1 },
            Layer::Sigmoid,
        ],
    );
    let a = init_network(&s, 3).unwrap();
    assert_eq!(a.params, init_network(&s, 3).unwrap().params);
    let conv = a.param_layout()[0].unwrap();
    assert_eq!((conv.weight_len, conv.bias_len), (8 * 3 * 5, 8));
    let last = a.param_layout()[3].unwrap();
    assert_eq!(last.weight_len, 4);
    let w = &a.params[last.weight_offset..last.weight_offset + 4];
    assert!(w.iter().all(|v| v.abs() <= 0.5));
    assert!(a.params[last.bias_offset..last.bias_offset + 1].iter().all(|&b| b == 0.0));
}

#[test]
fn logit_gradient_is_p_minus_y_over_batch() {
    let s = spec(
        20,
        vec![Layer::Dense { in_dim: 60, out_dim: 1 }, Layer::Sigmoid],
    );
    let state = init_network(&s, 8).unwrap();
    let xs = random_inputs(&mut rng(2), 5, 3, 20);
    let labels = [1.0, 0.0, 0.0, 1.0, 1.0];
    let probs = state.forward(&batch(&xs)).unwrap();
    let (_, g) = state.loss_and_grads(&batch(&xs), &labels).unwrap();
    let slot = state.param_layout()[0].unwrap();
    // The output bias sees the logit gradient summed over the batch; each
    // weight sees it times the input.
    let dlogit: Vec<f64> = probs.iter().zip(&labels).map(|(p, y)| (p - y) / 5.0).collect();
    assert!((g.0[slot.bias_offset] - dlogit.iter().sum::<f64>()).abs() < 1e-14);
    for i in [0, 17, 59] {
        let x_i: Vec<f64> = xs.iter().map(|x| x.iter().nth(i).copied().unwrap()).collect();
        let expected: f64 = dlogit.iter().zip(&x_i).map(|(d, x)| d * x).sum();
        assert!((g.0[slot.weight_offset + i] - expected).abs() < 1e-14);
    }
}

#[test]
fn loss_at_one_half_is_ln2() {
    let state = NetworkState::zeroed(NetworkSpec::reference()).unwrap();
    let xs = random_inputs(&mut rng(3), 2, 3, 600);
    let (loss, _) = state.loss_and_grads(&batch(&xs), &[1.0, 0.0]).unwrap();
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn adam_first_step_closed_form() {
    let s = spec(20, vec![Layer::Dense { in_dim: 60, out_dim: 1 }, Layer::Sigmoid]);
    let mut state = NetworkState::zeroed(s).unwrap();
    let mut g = vec![0.0; state.params.len()];
    g[0] = 1.0;
    g[1] = -4.0;
    state.adam_step(&Gradients(g), &AdamHyper::default()).unwrap();
    // m̂ = g, v̂ = g², so the step is -lr·g/(|g| + ε).
    let lr = 1e-3;
    assert!((state.params[0] - (-lr / (1.0 + 1e-8))).abs() < 1e-18);
    assert!((state.params[1] - (lr * 4.0 / (4.0 + 1e-8))).abs() < 1e-18);
    assert!(state.params[2..].iter().all(|&p| p == 0.0));
}

#[test]
fn gradient_check_tiny_network() {
    let s = spec(
        20,
        vec![
            Layer::Conv1d { in_channels: 3, out_channels: 2, kernel_size: 3, stride: 2 },
            Layer::Relu,
            Layer::GlobalAveragePool,
            Layer::Dense { in_dim: 2, out_dim: 1 },
            Layer::Sigmoid,
        ],
    );
    let state = init_network(&s, 4).unwrap();
    let xs = random_inputs(&mut rng(4), 3, 3, 20);
    let err = gradient_check(&state, &xs, &[1.0, 0.0, 1.0], 1e-5);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn identical_runs_have_identical_trajectories() {
    let run = || {
        let mut state = init_network(&NetworkSpec::reference(), 5).unwrap();
        let xs = random_inputs(&mut rng(6), 4, 3, 600);
        for _ in 0..3 {
            let (_, g) = state.loss_and_grads(&batch(&xs), &[0.0, 1.0, 1.0, 0.0]).unwrap();
            state.adam_step(&g, &AdamHyper::default()).unwrap();
        }
        state
    };
    assert_eq!(run(), run());
}

#[test]
fn loss_decreases_on_fixed_batch() {
    let mut state = init_network(&NetworkSpec::reference(), 9).unwrap();
    let xs: Vec<Array2<f64>> = (0..8)
        .map(|i| Array2::from_elem((3, 600), if i % 2 == 0 { 1.0 } else { -1.0 }))
        .collect();
    let labels: Vec<f64> = (0..8).map(|i| (i % 2) as f64).collect();
    let mut losses = Vec::new();
    for _ in 0..10 {
        let (loss, g) = state.loss_and_grads(&batch(&xs), &labels).unwrap();
        losses.push(loss);
        state.adam_step(&g, &AdamHyper::default()).unwrap();
    }
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}
