//! A small differentiable network: 1D convolutions, pooling, dense layers and
//! a sigmoid head, trained with binary cross-entropy and Adam.
//!
//! Parameters live in one flat `f64` store laid out in layer declaration
//! order (weights, then biases, per parameterized layer). Gradients use the
//! same layout, which keeps the optimizer and the model file format trivial.

mod artifact;
mod layers;
mod spec;

use ndarray::{Array2, Array3, ArrayView2, ArrayViewMut2};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use artifact::{read_artifact, write_artifact, ArtifactError, ARTIFACT_MAGIC, ARTIFACT_VERSION};
pub use spec::{Layer, NetworkSpec, ParamSlot, Shape, SpecError};

use layers::{Activation, Cache};

/// Lower/upper clamp applied to probabilities inside the loss.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("input shape {found} does not match network input {expected}")]
    InputShape { expected: Shape, found: Shape },
    #[error("empty batch")]
    EmptyBatch,
    #[error("{labels} labels for a batch of {batch}")]
    LabelCount { labels: usize, batch: usize },
    #[error("label {0} is not 0 or 1")]
    LabelValue(f64),
    #[error("gradient store has {found} entries, expected {expected}")]
    GradientShape { expected: usize, found: usize },
    #[error("non-finite input value")]
    NonFiniteInput,
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

/// Gradient of the loss with respect to every parameter, same layout as the store.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

/// Spec, parameters and optimizer state of one binary classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    spec: NetworkSpec,
    layout: Vec<Option<ParamSlot>>,
    shapes: Vec<Shape>,
    pub params: Vec<f64>,
    pub adam: AdamState,
}

/// A batch of equally shaped samples, ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBatch {
    act: Activation,
}

impl InputBatch {
    /// Builds a batch from `channels × length` matrices.
    pub fn from_samples<'a, I>(samples: I) -> Result<Self, NetError>
    where
        I: IntoIterator<Item = ArrayView2<'a, f64>>,
    {
        let samples: Vec<ArrayView2<'a, f64>> = samples.into_iter().collect();
        let first = samples.first().ok_or(NetError::EmptyBatch)?;
        let (channels, length) = first.dim();
        let mut act = Activation::zeros(channels, length, samples.len());
        for (s, sample) in samples.iter().enumerate() {
            if sample.dim() != (channels, length) {
                return Err(NetError::InputShape {
                    expected: Shape { channels, length },
                    found: Shape { channels: sample.nrows(), length: sample.ncols() },
                });
            }
            act.data
                .slice_mut(ndarray::s![.., s * length..(s + 1) * length])
                .assign(sample);
        }
        Ok(InputBatch { act })
    }

    /// Builds a batch from a `batch × channels × length` array.
    pub fn from_array(batch: &Array3<f64>) -> Result<Self, NetError> {
        Self::from_samples(batch.outer_iter())
    }

    pub fn len(&self) -> usize {
        self.act.batch
    }

    pub fn is_empty(&self) -> bool {
        self.act.batch == 0
    }

    pub fn shape(&self) -> Shape {
        Shape { channels: self.act.channels, length: self.act.length }
    }
}

/// Logistic function, evaluated without overflow and kept strictly inside (0, 1).
pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Mean binary cross-entropy with probabilities clamped to `[1e-7, 1 - 1e-7]`.
pub fn binary_cross_entropy(probs: &[f64], labels: &[f64]) -> f64 {
    let sum: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    -sum / probs.len() as f64
}

/// Creates a network with fan-in-scaled uniform weights and zero biases.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> Result<NetworkState, SpecError> {
    let mut state = NetworkState::zeroed(spec.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (layer, slot) in spec.layers.iter().zip(&state.layout) {
        let (Some(slot), Some(fan_in)) = (slot, layer.fan_in()) else { continue };
        let bound = (1.0 / fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        for w in &mut state.params[slot.weight_offset..slot.weight_offset + slot.weight_len] {
            *w = dist.sample(&mut rng);
        }
    }
    Ok(state)
}

impl NetworkState {
    /// All parameters and moments zero.
    pub fn zeroed(spec: NetworkSpec) -> Result<Self, SpecError> {
        let shapes = spec.shapes()?;
        let layout = spec.param_layout();
        let n = spec.param_count();
        Ok(NetworkState {
            spec,
            layout,
            shapes,
            params: vec![0.0; n],
            adam: AdamState { m: vec![0.0; n], v: vec![0.0; n], step: 0 },
        })
    }

    /// Rebuilds a state from a spec and a parameter vector, with fresh optimizer state.
    pub fn from_params(spec: NetworkSpec, params: Vec<f64>) -> Result<Self, NetError> {
        let mut state = Self::zeroed(spec)?;
        if params.len() != state.params.len() {
            return Err(NetError::GradientShape { expected: state.params.len(), found: params.len() });
        }
        state.params = params;
        Ok(state)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn param_layout(&self) -> &[Option<ParamSlot>] {
        &self.layout
    }

    fn weight_view(&self, slot: &ParamSlot, rows: usize) -> ArrayView2<'_, f64> {
        let w = &self.params[slot.weight_offset..slot.weight_offset + slot.weight_len];
        ArrayView2::from_shape((rows, slot.weight_len / rows), w).expect("layout matches spec")
    }

    fn bias(&self, slot: &ParamSlot) -> &[f64] {
        &self.params[slot.bias_offset..slot.bias_offset + slot.bias_len]
    }

    fn check_input(&self, batch: &InputBatch) -> Result<(), NetError> {
        if batch.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let expected = self.spec.input_shape();
        if batch.shape() != expected {
            return Err(NetError::InputShape { expected, found: batch.shape() });
        }
        if batch.act.data.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFiniteInput);
        }
        Ok(())
    }

    /// Runs every layer except the final sigmoid, returning logits and, if
    /// requested, the per-layer caches.
    fn forward_logits(&self, batch: &InputBatch, keep: bool) -> (Vec<f64>, Vec<Option<Cache>>) {
        let mut x = batch.act.clone();
        let mut caches = Vec::with_capacity(self.spec.layers.len());
        for (layer, slot) in self.spec.layers.iter().zip(&self.layout) {
            let input = std::mem::replace(&mut x, Activation::zeros(0, 0, 0));
            let (next, cache) = match *layer {
                Layer::Conv1d { out_channels, kernel_size, stride, .. } => {
                    let slot = slot.as_ref().expect("conv has params");
                    let weight = self.weight_view(slot, out_channels);
                    layers::conv_forward(&input, weight, self.bias(slot), kernel_size, stride)
                }
                Layer::Relu => layers::relu_forward(input),
                Layer::MaxPool1d { width } => layers::maxpool_forward(&input, width),
                Layer::GlobalAveragePool => layers::gap_forward(&input),
                Layer::Dense { out_dim, .. } => {
                    let slot = slot.as_ref().expect("dense has params");
                    layers::dense_forward(&input, self.weight_view(slot, out_dim), self.bias(slot))
                }
                Layer::Sigmoid => {
                    x = input;
                    caches.push(None);
                    break;
                }
            };
            x = next;
            caches.push(keep.then_some(cache));
        }
        (x.data.row(0).to_vec(), caches)
    }

    /// Probabilities for every sample of the batch, in batch order.
    pub fn forward(&self, batch: &InputBatch) -> Result<Vec<f64>, NetError> {
        self.check_input(batch)?;
        let (logits, _) = self.forward_logits(batch, false);
        Ok(logits.into_iter().map(sigmoid).collect())
    }

    /// Pre-sigmoid outputs for every sample of the batch.
    pub fn logits(&self, batch: &InputBatch) -> Result<Vec<f64>, NetError> {
        self.check_input(batch)?;
        Ok(self.forward_logits(batch, false).0)
    }

    /// Mean binary cross-entropy over the batch and its exact gradient.
    pub fn loss_and_grads(&self, batch: &InputBatch, labels: &[f64]) -> Result<(f64, Gradients), NetError> {
        self.check_input(batch)?;
        if labels.len() != batch.len() {
            return Err(NetError::LabelCount { labels: labels.len(), batch: batch.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(NetError::LabelValue(bad));
        }
        let (logits, caches) = self.forward_logits(batch, true);
        let probs: Vec<f64> = logits.iter().copied().map(sigmoid).collect();
        let loss = binary_cross_entropy(&probs, labels);

        let b = batch.len();
        let mut grad = Activation::zeros(1, 1, b);
        for (s, (p, y)) in probs.iter().zip(labels).enumerate() {
            grad.data[[0, s]] = (p - y) / b as f64;
        }
        let mut grads = vec![0.0; self.params.len()];
        self.backward(grad, &caches, &mut grads);
        Ok((loss, Gradients(grads)))
    }

    fn backward(&self, mut grad: Activation, caches: &[Option<Cache>], grads: &mut [f64]) {
        let first_param_layer = self.layout.iter().position(Option::is_some).unwrap_or(0);
        let shapes_in = |i: usize| if i == 0 { self.spec.input_shape() } else { self.shapes[i - 1] };
        for i in (0..self.spec.layers.len()).rev() {
            let layer = self.spec.layers[i];
            let Some(cache) = &caches[i] else { continue };
            let need_input_grad = i > first_param_layer;
            let in_shape = shapes_in(i);
            grad = match (layer, cache) {
                (Layer::Conv1d { out_channels, kernel_size, stride, .. }, Cache::Conv { cols, in_length }) => {
                    let slot = self.layout[i].expect("conv has params");
                    let (wgrad, bgrad) = split_slot(grads, &slot);
                    let dweight = ArrayViewMut2::from_shape((out_channels, slot.weight_len / out_channels), wgrad)
                        .expect("layout matches spec");
                    match layers::conv_backward(
                        &grad,
                        cols,
                        in_shape.channels,
                        *in_length,
                        self.weight_view(&slot, out_channels),
                        dweight,
                        bgrad,
                        kernel_size,
                        stride,
                        need_input_grad,
                    ) {
                        Some(g) => g,
                        None => return,
                    }
                }
                (Layer::Dense { out_dim, .. }, Cache::Dense { flat, in_length }) => {
                    let slot = self.layout[i].expect("dense has params");
                    let (wgrad, bgrad) = split_slot(grads, &slot);
                    let dweight = ArrayViewMut2::from_shape((out_dim, slot.weight_len / out_dim), wgrad)
                        .expect("layout matches spec");
                    match layers::dense_backward(
                        &grad,
                        flat,
                        in_shape.channels,
                        *in_length,
                        self.weight_view(&slot, out_dim),
                        dweight,
                        bgrad,
                        need_input_grad,
                    ) {
                        Some(g) => g,
                        None => return,
                    }
                }
                (Layer::Relu, Cache::Relu { output }) => layers::relu_backward(grad, output),
                (Layer::MaxPool1d { .. }, Cache::MaxPool { argmax, in_length }) => {
                    layers::maxpool_backward(&grad, argmax, *in_length)
                }
                (Layer::GlobalAveragePool, Cache::Gap { in_length }) => layers::gap_backward(&grad, *in_length),
                _ => unreachable!("cache kind matches its layer"),
            };
            if i <= first_param_layer {
                return;
            }
        }
    }

    /// One Adam update with bias correction.
    pub fn adam_step(&mut self, grads: &Gradients, hyper: &AdamHyper) -> Result<(), NetError> {
        if grads.0.len() != self.params.len() {
            return Err(NetError::GradientShape { expected: self.params.len(), found: grads.0.len() });
        }
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let correction1 = 1.0 - hyper.beta1.powi(t);
        let correction2 = 1.0 - hyper.beta2.powi(t);
        let AdamState { m, v, .. } = &mut self.adam;
        for (((p, m), v), &g) in self.params.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(&grads.0) {
            *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
            *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
        Ok(())
    }
}

fn split_slot<'a>(grads: &'a mut [f64], slot: &ParamSlot) -> (&'a mut [f64], &'a mut [f64]) {
    let region = &mut grads[slot.weight_offset..slot.bias_offset + slot.bias_len];
    region.split_at_mut(slot.weight_len)
}

/// Convenience wrapper: probabilities for a slice of `channels × length` matrices.
pub fn forward_matrices(state: &NetworkState, samples: &[Array2<f64>]) -> Result<Vec<f64>, NetError> {
    let batch = InputBatch::from_samples(samples.iter().map(|s| s.view()))?;
    state.forward(&batch)
}
