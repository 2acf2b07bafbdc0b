//! Repeated-split evaluation over a grid of activities, split kinds and modes.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::MetricSet;
use super::split::{split, Partitions, SplitFractions, SplitKind};
use super::task::{make_task, TaskMode};
use crate::domain::{ActivityClass, LabeledWindow};
use crate::neuralnet::NetworkSpec;
use crate::seeds::derive_seed;
use crate::trainer::{predict_examples, train_binary, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub activities: Vec<ActivityClass>,
    pub split_kinds: Vec<SplitKind>,
    pub modes: Vec<TaskMode>,
    pub repetitions: usize,
    pub base_seed: u64,
    pub fractions: SplitFractions,
    pub spec: NetworkSpec,
    /// `seed` is ignored; every job derives its own.
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            activities: ActivityClass::ALL.to_vec(),
            split_kinds: SplitKind::ALL.to_vec(),
            modes: TaskMode::ALL.to_vec(),
            repetitions: 10,
            base_seed: 0,
            fractions: SplitFractions::default(),
            spec: NetworkSpec::reference(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid experiment config: {0}")]
    Config(String),
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let err = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.repetitions == 0 {
            return err("repetitions must be >= 1");
        }
        if self.activities.is_empty() || self.split_kinds.is_empty() || self.modes.is_empty() {
            return err("experiment grid is empty");
        }
        self.fractions.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.spec.shapes().map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.train.validate().map_err(ExperimentError::Config)
    }

    pub fn cell_count(&self) -> usize {
        self.activities.len() * self.split_kinds.len() * self.modes.len()
    }

    pub fn job_count(&self) -> usize {
        self.cell_count() * self.repetitions
    }

    /// Seed for the split of repetition `rep`; shared by every activity and mode.
    pub fn split_seed(&self, kind: SplitKind, rep: usize) -> u64 {
        derive_seed(self.base_seed, &[1, kind as u64, rep as u64])
    }

    /// Seed for one (activity, split kind, mode, repetition) job.
    pub fn job_seed(&self, key: &JobKey) -> u64 {
        derive_seed(
            self.base_seed,
            &[2, key.activity.code() as u64, key.split_kind as u64, key.mode as u64, key.repetition as u64],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JobKey {
    pub activity: ActivityClass,
    pub split_kind: SplitKind,
    pub mode: TaskMode,
    pub repetition: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub activity: ActivityClass,
    pub split_kind: SplitKind,
    pub mode: TaskMode,
}

/// Mean and population standard deviation over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub mean: MetricSet,
    pub std: MetricSet,
    pub repetitions: usize,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum CellResult {
    Ok(CellSummary),
    Absent { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    #[serde(flatten)]
    pub key: CellKey,
    pub result: CellResult,
}

/// Aggregated results, one cell per (activity, split kind, mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub repetitions: usize,
    pub base_seed: u64,
    pub cells: Vec<ReportCell>,
}

impl EvalReport {
    pub fn cell(&self, activity: ActivityClass, split_kind: SplitKind, mode: TaskMode) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.key == CellKey { activity, split_kind, mode })
    }

    pub fn summary(&self, activity: ActivityClass, split_kind: SplitKind, mode: TaskMode) -> Option<&CellSummary> {
        match &self.cell(activity, split_kind, mode)?.result {
            CellResult::Ok(s) => Some(s),
            CellResult::Absent { .. } => None,
        }
    }

    pub fn absent_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.result, CellResult::Absent { .. }))
            .count()
    }
}

/// Population mean and standard deviation (divisor N).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn summarize(runs: &[(u64, MetricSet)]) -> CellSummary {
    let mut mean = [0.0; 3];
    let mut std = [0.0; 3];
    for m in 0..3 {
        let values: Vec<f64> = runs.iter().map(|(_, r)| r.values()[m]).collect();
        (mean[m], std[m]) = mean_std(&values);
    }
    CellSummary {
        mean: MetricSet::from_values(mean),
        std: MetricSet::from_values(std),
        repetitions: runs.len(),
        seeds: runs.iter().map(|(s, _)| *s).collect(),
    }
}

/// Trains and tests one model.
pub fn run_job(
    windows: &[LabeledWindow],
    partitions: &Partitions,
    key: &JobKey,
    cfg: &ExperimentConfig,
) -> Result<MetricSet, String> {
    let seed = cfg.job_seed(key);
    let task = make_task(windows, partitions, key.activity, key.mode, seed).map_err(|e| e.to_string())?;
    task.check_disjoint().map_err(|e| e.to_string())?;
    let train_cfg = TrainConfig { seed: derive_seed(seed, &[0]), ..cfg.train };
    let (state, _) = train_binary(&task, &cfg.spec, &train_cfg).map_err(|e| e.to_string())?;
    let scores = predict_examples(&state, &task.test).map_err(|e| e.to_string())?;
    MetricSet::from_scores(&scores, &task.test_labels()).map_err(|e| e.to_string())
}

/// Runs every job of the grid on the current rayon pool and aggregates.
///
/// A cell with any failing repetition is reported absent with the first
/// failure's reason. Output is independent of scheduling.
pub fn run_experiment(windows: &[LabeledWindow], cfg: &ExperimentConfig) -> Result<EvalReport, ExperimentError> {
    cfg.validate()?;
    if windows.is_empty() {
        return Err(ExperimentError::EmptyDataset);
    }

    let mut splits: BTreeMap<(SplitKind, usize), Result<Partitions, String>> = BTreeMap::new();
    for &kind in &cfg.split_kinds {
        for rep in 0..cfg.repetitions {
            let parts = split(kind, windows, &cfg.fractions, cfg.split_seed(kind, rep)).map_err(|e| e.to_string());
            splits.insert((kind, rep), parts);
        }
    }

    let mut jobs = Vec::with_capacity(cfg.job_count());
    for &activity in &cfg.activities {
        for &split_kind in &cfg.split_kinds {
            for &mode in &cfg.modes {
                for repetition in 0..cfg.repetitions {
                    jobs.push(JobKey { activity, split_kind, mode, repetition });
                }
            }
        }
    }

    let mut results: Vec<(JobKey, Result<MetricSet, String>)> = jobs
        .par_iter()
        .map(|key| {
            let result = match &splits[&(key.split_kind, key.repetition)] {
                Ok(parts) => run_job(windows, parts, key, cfg),
                Err(e) => Err(e.clone()),
            };
            match &result {
                Ok(m) => log::info!(
                    "{} {} {} rep {}: auroc {:.3}",
                    key.activity, key.split_kind, key.mode, key.repetition, m.auroc
                ),
                Err(e) => log::warn!("{} {} {} rep {}: {e}", key.activity, key.split_kind, key.mode, key.repetition),
            }
            (*key, result)
        })
        .collect();
    results.sort_by_key(|(k, _)| *k);

    let mut cells = Vec::with_capacity(cfg.cell_count());
    for &activity in &cfg.activities {
        for &split_kind in &cfg.split_kinds {
            for &mode in &cfg.modes {
                let key = CellKey { activity, split_kind, mode };
                let mut runs = Vec::with_capacity(cfg.repetitions);
                let mut failure = None;
                for (job, result) in &results {
                    if (job.activity, job.split_kind, job.mode) != (activity, split_kind, mode) {
                        continue;
                    }
                    match result {
                        Ok(m) => runs.push((cfg.job_seed(job), *m)),
                        Err(e) if failure.is_none() => failure = Some(format!("repetition {}: {e}", job.repetition)),
                        Err(_) => {}
                    }
                }
                let result = match failure {
                    Some(reason) => CellResult::Absent { reason },
                    None => CellResult::Ok(summarize(&runs)),
                };
                cells.push(ReportCell { key, result });
            }
        }
    }
    Ok(EvalReport { repetitions: cfg.repetitions, base_seed: cfg.base_seed, cells })
}
