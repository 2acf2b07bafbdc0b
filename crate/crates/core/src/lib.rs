//! Complex activity recognition from smartphone accelerometer logs.
//!
//! The pipeline runs in stages, each with its own module:
//!
//! - [`ingest`]: parse accelerometer CSV and self-report JSON-lines logs into per-user timelines
//! - [`preprocess`]: cut a 3×600 window on a 300 ms grid before every report
//! - [`neuralnet`]: 1D convolutional binary classifier with exact gradients and Adam
//! - [`trainer`]: deterministic mini-batch training with validation-AUROC model selection
//! - [`evaluation`]: user-wise and sample-wise splits, balanced/imbalanced tasks, metrics, reports
//! - [`synthgen`]: reproducible synthetic corpora with tunable class separability
//! - [`cli`]: the `har` command-line front end

pub mod cli;
pub mod domain;
pub mod evaluation;
pub mod ingest;
pub mod neuralnet;
pub mod preprocess;
pub mod seeds;
pub mod synthgen;
pub mod trainer;

pub use domain::{
    map_activity, validate_window, AccelSample, ActivityClass, DiscardReason, LabeledWindow, SelfReport, UserId,
};
