//! One-vs-rest binary tasks built on top of a split.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::split::{Partitions, SplitKind};
use crate::domain::{ActivityClass, LabeledWindow};
use crate::seeds::derive_seed;

/// Whether negatives are downsampled to the number of positives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    Balanced,
    Imbalanced,
}

impl TaskMode {
    pub const ALL: [TaskMode; 2] = [TaskMode::Balanced, TaskMode::Imbalanced];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskMode::Balanced => "balanced",
            TaskMode::Imbalanced => "imbalanced",
        }
    }
}

impl fmt::Display for TaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "balanced" => Ok(TaskMode::Balanced),
            "imbalanced" => Ok(TaskMode::Imbalanced),
            other => Err(format!("unknown mode `{other}` (expected balanced or imbalanced)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TaskError {
    #[error("{partition} partition has no {target} windows")]
    NoPositives { partition: &'static str, target: ActivityClass },
    #[error("{partition} partition has no windows outside {target}")]
    NoNegatives { partition: &'static str, target: ActivityClass },
    #[error("{partition} partition has {negatives} negatives for {positives} positives; cannot balance")]
    TooFewNegatives { partition: &'static str, positives: usize, negatives: usize },
    #[error("{0}")]
    Leakage(String),
}

/// A window and its binary label.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub window: &'a LabeledWindow,
    pub label: bool,
}

/// Target-vs-rest task with three disjoint partitions.
#[derive(Debug, Clone)]
pub struct BinaryTask<'a> {
    pub target: ActivityClass,
    pub mode: TaskMode,
    pub split_kind: SplitKind,
    pub train: Vec<Example<'a>>,
    pub validation: Vec<Example<'a>>,
    pub test: Vec<Example<'a>>,
}

fn labels(examples: &[Example<'_>]) -> Vec<bool> {
    examples.iter().map(|e| e.label).collect()
}

impl<'a> BinaryTask<'a> {
    pub fn partitions(&self) -> [(&'static str, &[Example<'a>]); 3] {
        [("train", &self.train), ("validation", &self.validation), ("test", &self.test)]
    }

    pub fn test_labels(&self) -> Vec<bool> {
        labels(&self.test)
    }

    pub fn validation_labels(&self) -> Vec<bool> {
        labels(&self.validation)
    }

    /// Checks that no report (and, for population splits, no user) is shared
    /// between partitions.
    pub fn check_disjoint(&self) -> Result<(), TaskError> {
        let parts = self.partitions();
        for i in 0..3 {
            for j in i + 1..3 {
                let (name_a, a) = parts[i];
                let (name_b, b) = parts[j];
                let reports: BTreeSet<&str> = a.iter().map(|e| e.window.report_id.as_str()).collect();
                if let Some(shared) = b.iter().find(|e| reports.contains(e.window.report_id.as_str())) {
                    return Err(TaskError::Leakage(format!(
                        "report {} appears in both {name_a} and {name_b}",
                        shared.window.report_id
                    )));
                }
                if self.split_kind == SplitKind::Population {
                    let users: BTreeSet<&str> = a.iter().map(|e| e.window.user_id.as_str()).collect();
                    if let Some(shared) = b.iter().find(|e| users.contains(e.window.user_id.as_str())) {
                        return Err(TaskError::Leakage(format!(
                            "user {} appears in both {name_a} and {name_b}",
                            shared.window.user_id
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Builds the task for `target` on top of an existing split.
///
/// Balanced mode keeps every positive and draws the same number of negatives
/// uniformly without replacement from the pooled other classes.
pub fn make_task<'a>(
    windows: &'a [LabeledWindow],
    partitions: &Partitions,
    target: ActivityClass,
    mode: TaskMode,
    seed: u64,
) -> Result<BinaryTask<'a>, TaskError> {
    let mut built: Vec<Vec<Example<'a>>> = Vec::with_capacity(3);
    for (p, (name, indices)) in partitions.parts().into_iter().enumerate() {
        let (positives, negatives): (Vec<usize>, Vec<usize>) =
            indices.iter().partition(|&&i| windows[i].label == target);
        if positives.is_empty() {
            return Err(TaskError::NoPositives { partition: name, target });
        }
        if negatives.is_empty() {
            return Err(TaskError::NoNegatives { partition: name, target });
        }
        let negatives = match mode {
            TaskMode::Imbalanced => negatives,
            TaskMode::Balanced => {
                if negatives.len() < positives.len() {
                    return Err(TaskError::TooFewNegatives {
                        partition: name,
                        positives: positives.len(),
                        negatives: negatives.len(),
                    });
                }
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[p as u64]));
                let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, negatives.len(), positives.len())
                    .into_iter()
                    .map(|k| negatives[k])
                    .collect();
                chosen.sort_unstable();
                chosen
            }
        };
        let mut tagged: Vec<(usize, bool)> = positives
            .iter()
            .map(|&i| (i, true))
            .chain(negatives.iter().map(|&i| (i, false)))
            .collect();
        tagged.sort_unstable();
        let examples: Vec<Example<'a>> = tagged
            .into_iter()
            .map(|(i, label)| Example { window: &windows[i], label })
            .collect();
        built.push(examples);
    }
    let test = built.pop().expect("three partitions");
    let validation = built.pop().expect("three partitions");
    let train = built.pop().expect("three partitions");
    Ok(BinaryTask { target, mode, split_kind: partitions.kind, train, validation, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::UserId;
    use ndarray::Array2;

    fn window(i: usize, label: ActivityClass) -> LabeledWindow {
        LabeledWindow {
            user_id: UserId::new(format!("u{}", i % 7)),
            report_id: format!("r{i}"),
            grid_start_ms: 0,
            data: Array2::zeros((3, 2)),
            label,
        }
    }

    fn partitions(n: usize) -> Partitions {
        Partitions { kind: SplitKind::Hybrid, train: (0..n).collect(), validation: (0..n).collect(), test: (0..n).collect() }
    }

    #[test]
    fn balanced_draws_equal_negatives() {
        let ws: Vec<_> = (0..2000)
            .map(|i| window(i, if i < 100 { ActivityClass::Shopping } else { ActivityClass::ALL[i % 7] }))
            .collect();
        let task = make_task(&ws, &partitions(2000), ActivityClass::Shopping, TaskMode::Balanced, 3).unwrap();
        for (_, part) in task.partitions() {
            let pos = part.iter().filter(|e| e.label).count();
            assert_eq!(pos, 100);
            assert_eq!(part.len(), 200);
            assert!(part.iter().all(|e| e.label == (e.window.label == ActivityClass::Shopping)));
        }
        let imbalanced = make_task(&ws, &partitions(2000), ActivityClass::Shopping, TaskMode::Imbalanced, 3).unwrap();
        assert_eq!(imbalanced.test.len(), 2000);
    }

    #[test]
    fn missing_positives_names_partition() {
        let ws: Vec<_> = (0..30).map(|i| window(i, if i < 20 { ActivityClass::Eating } else { ActivityClass::Sleeping })).collect();
        let parts = Partitions {
            kind: SplitKind::Hybrid,
            train: (0..10).chain(20..25).collect(),
            validation: (10..15).chain(25..30).collect(),
            test: (15..20).collect(),
        };
        let err = make_task(&ws, &parts, ActivityClass::Sleeping, TaskMode::Balanced, 0).unwrap_err();
        assert_eq!(err, TaskError::NoPositives { partition: "test", target: ActivityClass::Sleeping });
        assert!(err.to_string().contains("test"));
    }

    #[test]
    fn leakage_is_detected() {
        let ws: Vec<_> = (0..20).map(|i| window(i, ActivityClass::ALL[i % 2])).collect();
        let task = make_task(&ws, &partitions(20), ActivityClass::Sleeping, TaskMode::Imbalanced, 0).unwrap();
        assert!(matches!(task.check_disjoint(), Err(TaskError::Leakage(_))));
    }
}
