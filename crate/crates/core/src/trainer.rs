//! Mini-batch training of one binary classifier with validation-based model
//! selection.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::LabeledWindow;
use crate::evaluation::metrics::{auroc, MetricError};
use crate::evaluation::task::{BinaryTask, Example};
use crate::neuralnet::{init_network, AdamHyper, InputBatch, NetError, NetworkSpec, NetworkState, SpecError};

/// Windows scored per forward pass in [`predict`].
const PREDICT_CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    /// Epochs without a validation AUROC improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 30, batch_size: 32, adam: AdamHyper::default(), patience: 5, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.epochs == 0 {
            return Err("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return Err("batch_size must be >= 1".into());
        }
        if self.patience == 0 {
            return Err("patience must be >= 1".into());
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_auroc: Vec<f64>,
    /// Zero-based index of the epoch whose parameters were kept.
    pub selected_epoch: usize,
}

impl TrainHistory {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }

    /// CSV with columns `epoch,train_loss,val_auroc`; epochs are one-based.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["epoch", "train_loss", "val_auroc"])?;
        for (i, (loss, auc)) in self.train_loss.iter().zip(&self.val_auroc).enumerate() {
            wtr.write_record([(i + 1).to_string(), loss.to_string(), auc.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} partition is empty")]
    EmptyPartition(&'static str),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("validation metric: {0}")]
    Metric(#[from] MetricError),
}

fn batch_of(examples: &[Example<'_>]) -> Result<(InputBatch, Vec<f64>), NetError> {
    let input = InputBatch::from_samples(examples.iter().map(|e| e.window.data.view()))?;
    let labels = examples.iter().map(|e| if e.label { 1.0 } else { 0.0 }).collect();
    Ok((input, labels))
}

/// Scores windows in input order.
pub fn predict<'a, I>(state: &NetworkState, windows: I) -> Result<Vec<f64>, NetError>
where
    I: IntoIterator<Item = &'a LabeledWindow>,
{
    let windows: Vec<&LabeledWindow> = windows.into_iter().collect();
    let mut scores = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(PREDICT_CHUNK) {
        let batch = InputBatch::from_samples(chunk.iter().map(|w| w.data.view()))?;
        scores.extend(state.forward(&batch)?);
    }
    Ok(scores)
}

pub fn predict_examples(state: &NetworkState, examples: &[Example<'_>]) -> Result<Vec<f64>, NetError> {
    predict(state, examples.iter().map(|e| e.window))
}

/// Trains one classifier and returns the parameters of the epoch with the best
/// validation AUROC.
///
/// The training set is reshuffled every epoch with a generator seeded by
/// `cfg.seed + epoch` (epochs counted from one); weights are initialized from
/// `cfg.seed`. Training stops after `patience` epochs without a strict
/// improvement, or as soon as validation AUROC reaches 1.
pub fn train_binary(
    task: &BinaryTask<'_>,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
) -> Result<(NetworkState, TrainHistory), TrainError> {
    cfg.validate().map_err(TrainError::Config)?;
    if task.train.is_empty() {
        return Err(TrainError::EmptyPartition("train"));
    }
    if task.validation.is_empty() {
        return Err(TrainError::EmptyPartition("validation"));
    }
    let val_labels = task.validation_labels();
    let mut state = init_network(spec, cfg.seed)?;
    let mut best = state.clone();
    let mut best_auroc = f64::NEG_INFINITY;
    let mut history = TrainHistory { train_loss: Vec::new(), val_auroc: Vec::new(), selected_epoch: 0 };
    let mut order: Vec<usize> = (0..task.train.len()).collect();
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64)));
        let mut loss_sum = 0.0;
        let mut batch_examples = Vec::with_capacity(cfg.batch_size);
        for chunk in order.chunks(cfg.batch_size) {
            batch_examples.clear();
            batch_examples.extend(chunk.iter().map(|&i| task.train[i]));
            let (input, labels) = batch_of(&batch_examples)?;
            let (loss, grads) = state.loss_and_grads(&input, &labels)?;
            state.adam_step(&grads, &cfg.adam)?;
            loss_sum += loss * chunk.len() as f64;
        }
        history.train_loss.push(loss_sum / task.train.len() as f64);

        let scores = predict_examples(&state, &task.validation)?;
        let val_auroc = auroc(&scores, &val_labels)?;
        history.val_auroc.push(val_auroc);
        if val_auroc > best_auroc {
            best_auroc = val_auroc;
            best.clone_from(&state);
            history.selected_epoch = epoch - 1;
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= cfg.patience || best_auroc >= 1.0 {
            break;
        }
    }
    Ok((best, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ActivityClass, UserId};
    use crate::evaluation::split::SplitKind;
    use crate::evaluation::task::TaskMode;
    use crate::neuralnet::Layer;
    use ndarray::Array2;

    fn small_spec() -> NetworkSpec {
        NetworkSpec {
            input_channels: 3,
            input_length: 600,
            layers: vec![
                Layer::Conv1d { in_channels: 3, out_channels: 4, kernel_size: 9, stride: 4 },
                Layer::Relu,
                Layer::GlobalAveragePool,
                Layer::Dense { in_dim: 4, out_dim: 1 },
                Layer::Sigmoid,
            ],
        }
    }

    fn windows(n: usize) -> Vec<LabeledWindow> {
        (0..n)
            .map(|i| {
                let level = if i % 2 == 0 { 1.0 } else { -1.0 };
                LabeledWindow {
                    user_id: UserId::new("u"),
                    report_id: format!("r{i}"),
                    grid_start_ms: 0,
                    data: Array2::from_shape_fn((3, 600), |(a, k)| level * (a as f64 + 1.0) + ((i * 7 + k) % 13) as f64 * 0.01),
                    label: if i % 2 == 0 { ActivityClass::Sleeping } else { ActivityClass::Eating },
                }
            })
            .collect()
    }

    fn task(ws: &[LabeledWindow]) -> BinaryTask<'_> {
        let ex = |r: std::ops::Range<usize>| -> Vec<Example<'_>> {
            r.map(|i| Example { window: &ws[i], label: ws[i].label == ActivityClass::Sleeping }).collect()
        };
        BinaryTask {
            target: ActivityClass::Sleeping,
            mode: TaskMode::Balanced,
            split_kind: SplitKind::Hybrid,
            train: ex(0..24),
            validation: ex(24..32),
            test: ex(32..40),
        }
    }

    #[test]
    fn deterministic_and_separates() {
        let ws = windows(40);
        let t = task(&ws);
        let cfg = TrainConfig { epochs: 5, batch_size: 8, seed: 11, ..Default::default() };
        let (a, ha) = train_binary(&t, &small_spec(), &cfg).unwrap();
        let (b, hb) = train_binary(&t, &small_spec(), &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a.params, b.params);
        assert!(ha.val_auroc[ha.selected_epoch] >= 0.9, "{ha:?}");
        assert!(ha.val_auroc.iter().all(|&v| v <= ha.val_auroc[ha.selected_epoch]));
    }

    #[test]
    fn empty_partitions_are_rejected() {
        let ws = windows(40);
        let mut t = task(&ws);
        t.validation.clear();
        assert_eq!(
            train_binary(&t, &small_spec(), &TrainConfig::default()).unwrap_err(),
            TrainError::EmptyPartition("validation")
        );
        t.train.clear();
        assert_eq!(
            train_binary(&t, &small_spec(), &TrainConfig::default()).unwrap_err(),
            TrainError::EmptyPartition("train")
        );
    }

    #[test]
    fn prediction_contract() {
        let ws = windows(10);
        let zero = NetworkState::zeroed(NetworkSpec::reference()).unwrap();
        assert_eq!(predict(&zero, &ws).unwrap(), vec![0.5; 10]);

        let state = init_network(&NetworkSpec::reference(), 3).unwrap();
        let all = predict(&state, &ws).unwrap();
        assert_eq!(all.len(), 10);
        for (i, w) in ws.iter().enumerate() {
            let alone = predict(&state, std::iter::once(w)).unwrap();
            assert_eq!(alone[0].to_bits(), all[i].to_bits());
        }
    }

    #[test]
    fn history_csv() {
        let h = TrainHistory { train_loss: vec![0.7, 0.5], val_auroc: vec![0.6, 0.8], selected_epoch: 1 };
        let mut out = Vec::new();
        h.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "epoch,train_loss,val_auroc\n1,0.7,0.6\n2,0.5,0.8\n");
    }
}
