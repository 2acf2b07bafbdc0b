//! Binary classification metrics.

use serde::{Deserialize, Serialize};

/// Scores strictly above this are predicted positive.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("AUROC needs both positive and negative labels")]
    SingleClass,
    #[error("NaN score")]
    NanScore,
    #[error("no samples")]
    Empty,
}

fn check_lengths(a: usize, b: usize) -> Result<(), MetricError> {
    if a != b {
        return Err(MetricError::LengthMismatch { scores: a, labels: b });
    }
    if a == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Area under the ROC curve by the trapezoid rule over the tie-grouped curve.
///
/// Areas are accumulated in integer pair counts, so the result equals the
/// pairwise win rate (ties counting one half) exactly up to the final division.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_lengths(scores.len(), labels.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MetricError::NanScore);
    }
    let positives = labels.iter().filter(|&&l| l).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    // Twice the area, in units of (1 / positives) × (1 / negatives).
    let mut doubled_area: u128 = 0;
    let mut tp: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let score = scores[order[i]];
        let (mut group_tp, mut group_fp) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == score {
            if labels[order[i]] {
                group_tp += 1;
            } else {
                group_fp += 1;
            }
            i += 1;
        }
        doubled_area += group_fp as u128 * (2 * tp + group_tp) as u128;
        tp += group_tp;
    }
    Ok(doubled_area as f64 / (2 * positives as u128 * negatives as u128) as f64)
}

/// Counts of the 2×2 confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(predictions: &[bool], labels: &[bool]) -> Result<Self, MetricError> {
        check_lengths(predictions.len(), labels.len())?;
        let mut c = Confusion::default();
        for (&p, &l) in predictions.iter().zip(labels) {
            match (p, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }
}

// A class with no predicted and no actual members scores 0.
fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Unweighted mean of the positive-class and negative-class F1 scores.
pub fn f1_macro(predictions: &[bool], labels: &[bool]) -> Result<f64, MetricError> {
    let c = Confusion::from_predictions(predictions, labels)?;
    let positive = f1(c.tp, c.fp, c.fn_);
    let negative = f1(c.tn, c.fn_, c.fp);
    Ok((positive + negative) / 2.0)
}

pub fn accuracy(predictions: &[bool], labels: &[bool]) -> Result<f64, MetricError> {
    check_lengths(predictions.len(), labels.len())?;
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// The three reported metrics for one test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub auroc: f64,
    pub f1_macro: f64,
    pub accuracy: f64,
}

impl MetricSet {
    pub const NAMES: [&'static str; 3] = ["auroc", "f1_macro", "accuracy"];

    pub fn values(&self) -> [f64; 3] {
        [self.auroc, self.f1_macro, self.accuracy]
    }

    pub fn from_values(v: [f64; 3]) -> Self {
        MetricSet { auroc: v[0], f1_macro: v[1], accuracy: v[2] }
    }

    /// Scores every metric, thresholding at [`DECISION_THRESHOLD`] for F1 and accuracy.
    pub fn from_scores(scores: &[f64], labels: &[bool]) -> Result<Self, MetricError> {
        let predictions: Vec<bool> = scores.iter().map(|&s| s > DECISION_THRESHOLD).collect();
        Ok(MetricSet {
            auroc: auroc(scores, labels)?,
            f1_macro: f1_macro(&predictions, labels)?,
            accuracy: accuracy(&predictions, labels)?,
        })
    }
}
