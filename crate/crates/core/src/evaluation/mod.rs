//! Splits, binary tasks, metrics and the repeated-split experiment.

pub mod experiment;
pub mod metrics;
pub mod report;
pub mod split;
pub mod task;

pub use experiment::{run_experiment, CellKey, CellResult, CellSummary, EvalReport, ExperimentConfig, ReportCell};
pub use metrics::{accuracy, auroc, f1_macro, MetricError, MetricSet};
pub use split::{split, split_hybrid, split_population, Partitions, SplitError, SplitFractions, SplitKind};
pub use task::{make_task, BinaryTask, Example, TaskError, TaskMode};
