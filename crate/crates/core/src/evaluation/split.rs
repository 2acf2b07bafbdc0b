//! Train/validation/test splitting, by user or by window.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{LabeledWindow, UserId};

/// How windows are assigned to partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// User-wise: a user's windows all land in one partition.
    Population,
    /// Window-wise: a user may appear in every partition.
    Hybrid,
}

impl SplitKind {
    pub const ALL: [SplitKind; 2] = [SplitKind::Population, SplitKind::Hybrid];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::Population => "population",
            SplitKind::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "population" => Ok(SplitKind::Population),
            "hybrid" => Ok(SplitKind::Hybrid),
            other => Err(format!("unknown split kind `{other}` (expected population or hybrid)")),
        }
    }
}

/// Train/validation/test proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.6, validation: 0.2, test: 0.2 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<(), SplitError> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !(*f > 0.0 && *f < 1.0)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(SplitError::Fractions(*self));
        }
        Ok(())
    }

    /// Partition boundaries for `n` items, each partition holding at least one.
    fn cut_points(&self, n: usize) -> (usize, usize) {
        let first = ((n as f64 * self.train).round() as usize).clamp(1, n - 2);
        let second = ((n as f64 * (self.train + self.validation)).round() as usize).clamp(first + 1, n - 1);
        (first, second)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("population split needs at least 3 users, found {0}")]
    TooFewUsers(usize),
    #[error("hybrid split needs at least {min} windows, found {found}")]
    TooFewWindows { min: usize, found: usize },
    #[error("invalid split fractions {0:?}")]
    Fractions(SplitFractions),
}

/// Minimum number of windows for a window-wise split.
pub const MIN_HYBRID_WINDOWS: usize = 10;

/// Indices into a window slice, one list per partition, each ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partitions {
    pub kind: SplitKind,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Partitions {
    pub fn parts(&self) -> [(&'static str, &[usize]); 3] {
        [("train", &self.train), ("validation", &self.validation), ("test", &self.test)]
    }
}

fn assign<T: Copy + Ord>(mut items: Vec<T>, fractions: &SplitFractions, seed: u64) -> [BTreeSet<T>; 3] {
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (a, b) = fractions.cut_points(items.len());
    [
        items[..a].iter().copied().collect(),
        items[a..b].iter().copied().collect(),
        items[b..].iter().copied().collect(),
    ]
}

/// User-wise split: users are shuffled and cut by cumulative fraction of users.
pub fn split_population(
    windows: &[LabeledWindow],
    fractions: &SplitFractions,
    seed: u64,
) -> Result<Partitions, SplitError> {
    fractions.validate()?;
    let users: BTreeSet<&UserId> = windows.iter().map(|w| &w.user_id).collect();
    if users.len() < 3 {
        return Err(SplitError::TooFewUsers(users.len()));
    }
    let users: Vec<&UserId> = users.into_iter().collect();
    let ranks: Vec<usize> = (0..users.len()).collect();
    let groups = assign(ranks, fractions, seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (i, w) in windows.iter().enumerate() {
        let rank = users.binary_search(&&w.user_id).expect("user collected above");
        let p = groups.iter().position(|g| g.contains(&rank)).expect("every user assigned");
        parts[p].push(i);
    }
    let [train, validation, test] = parts;
    Ok(Partitions { kind: SplitKind::Population, train, validation, test })
}

/// Window-wise split: windows are shuffled and cut by cumulative fraction.
pub fn split_hybrid(windows: &[LabeledWindow], fractions: &SplitFractions, seed: u64) -> Result<Partitions, SplitError> {
    fractions.validate()?;
    if windows.len() < MIN_HYBRID_WINDOWS {
        return Err(SplitError::TooFewWindows { min: MIN_HYBRID_WINDOWS, found: windows.len() });
    }
    let [train, validation, test] = assign((0..windows.len()).collect(), fractions, seed);
    Ok(Partitions {
        kind: SplitKind::Hybrid,
        train: train.into_iter().collect(),
        validation: validation.into_iter().collect(),
        test: test.into_iter().collect(),
    })
}

pub fn split(
    kind: SplitKind,
    windows: &[LabeledWindow],
    fractions: &SplitFractions,
    seed: u64,
) -> Result<Partitions, SplitError> {
    match kind {
        SplitKind::Population => split_population(windows, fractions, seed),
        SplitKind::Hybrid => split_hybrid(windows, fractions, seed),
    }
}
