//! Core value types shared by every stage of the pipeline.
//!
//! Raw diary labels are folded into eight final activity classes by
//! [`map_activity`]; everything downstream works with [`ActivityClass`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Number of accelerometer axes in a window.
pub const WINDOW_AXES: usize = 3;
/// Number of grid points in a window.
pub const WINDOW_LEN: usize = 600;
/// Spacing between consecutive grid points.
pub const GRID_STEP_MS: i64 = 300;

/// Opaque participant identifier. Cheap to clone; shared by every sample of a user.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(Arc<str>);

impl UserId {
    pub fn new(id: impl AsRef<str>) -> Self {
        UserId(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId::new(s)
    }
}

/// One timestamped 3-axis accelerometer reading, in m/s².
#[derive(Debug, Clone, PartialEq)]
pub struct AccelSample {
    pub user_id: UserId,
    /// Milliseconds since the Unix epoch.
    pub t: i64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl AccelSample {
    /// Builds a sample, rejecting negative timestamps and non-finite axes.
    pub fn new(user_id: UserId, t: i64, x: f64, y: f64, z: f64) -> Result<Self, DomainError> {
        if t < 0 {
            return Err(DomainError::NegativeTimestamp(t));
        }
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(DomainError::NonFiniteAxis);
        }
        Ok(AccelSample { user_id, t, x, y, z })
    }

    pub fn axis(&self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

/// One time-diary entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfReport {
    pub user_id: UserId,
    pub report_id: String,
    #[serde(rename = "fill_start_ms")]
    pub fill_start: i64,
    #[serde(rename = "fill_end_ms")]
    pub fill_end: i64,
    pub raw_activity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
}

impl SelfReport {
    pub fn new(
        user_id: UserId,
        report_id: impl Into<String>,
        fill_start: i64,
        fill_end: i64,
        raw_activity: impl Into<String>,
        country: Option<String>,
    ) -> Result<Self, DomainError> {
        let raw_activity = raw_activity.into();
        if fill_start > fill_end {
            return Err(DomainError::InvertedFill { fill_start, fill_end });
        }
        if raw_activity.trim().is_empty() {
            return Err(DomainError::EmptyActivity);
        }
        Ok(SelfReport {
            user_id,
            report_id: report_id.into(),
            fill_start,
            fill_end,
            raw_activity,
            country,
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("negative timestamp {0}")]
    NegativeTimestamp(i64),
    #[error("non-finite acceleration value")]
    NonFiniteAxis,
    #[error("fill_start {fill_start} is after fill_end {fill_end}")]
    InvertedFill { fill_start: i64, fill_end: i64 },
    #[error("empty raw activity label")]
    EmptyActivity,
    #[error("unknown activity class {0:?}")]
    UnknownClass(String),
}

/// The eight activities kept for classification.
///
/// The discriminants are the stable serialization codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActivityClass {
    Sleeping = 0,
    Eating = 1,
    Studying = 2,
    AttendingLecture = 3,
    OnlineCommunication = 4,
    WatchingVideos = 5,
    Sports = 6,
    Shopping = 7,
}

impl ActivityClass {
    pub const ALL: [ActivityClass; 8] = [
        ActivityClass::Sleeping,
        ActivityClass::Eating,
        ActivityClass::Studying,
        ActivityClass::AttendingLecture,
        ActivityClass::OnlineCommunication,
        ActivityClass::WatchingVideos,
        ActivityClass::Sports,
        ActivityClass::Shopping,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Machine-friendly name used in config files and CSV output.
    pub fn slug(self) -> &'static str {
        match self {
            ActivityClass::Sleeping => "sleeping",
            ActivityClass::Eating => "eating",
            ActivityClass::Studying => "studying",
            ActivityClass::AttendingLecture => "attending_lecture",
            ActivityClass::OnlineCommunication => "online_communication",
            ActivityClass::WatchingVideos => "watching_videos",
            ActivityClass::Sports => "sports",
            ActivityClass::Shopping => "shopping",
        }
    }

    /// Human-readable name used in rendered tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ActivityClass::Sleeping => "Sleeping",
            ActivityClass::Eating => "Eating",
            ActivityClass::Studying => "Studying",
            ActivityClass::AttendingLecture => "Attending a lecture",
            ActivityClass::OnlineCommunication => "Online communication and social media",
            ActivityClass::WatchingVideos => "Watching videos/TV",
            ActivityClass::Sports => "Sports",
            ActivityClass::Shopping => "Shopping",
        }
    }

    /// Raw diary labels that map onto this class.
    pub fn raw_labels(self) -> &'static [&'static str] {
        match self {
            ActivityClass::Sleeping => &["Sleeping"],
            ActivityClass::Eating => &["Eating"],
            ActivityClass::Studying => &["Studying"],
            ActivityClass::AttendingLecture => &["Attending a lecture"],
            ActivityClass::OnlineCommunication => &[
                "Calling",
                "Chatting/reading",
                "Reading internet information",
                "Social media",
            ],
            ActivityClass::WatchingVideos => &["Watching videos/TV"],
            ActivityClass::Sports => &["Sports"],
            ActivityClass::Shopping => &["Shopping", "Other shopping"],
        }
    }
}

impl fmt::Display for ActivityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for ActivityClass {
    type Err = DomainError;

    /// Accepts the slug (`attending_lecture`) or the display name, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_lowercase();
        ActivityClass::ALL
            .into_iter()
            .find(|c| c.slug() == key || c.display_name().to_lowercase() == key)
            .ok_or_else(|| DomainError::UnknownClass(s.to_string()))
    }
}

impl Serialize for ActivityClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for ActivityClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let code = u8::deserialize(d)?;
        ActivityClass::from_code(code)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid class code {code}")))
    }
}

/// Diary labels that are excluded from classification (too rare, too broad,
/// or too generic).
pub const DROPPED_LABELS: [&str; 14] = [
    "Travelling",
    "Movie/theatre/concert",
    "Hobbies",
    "Arts",
    "Happy hour/drinking",
    "Other entertainment",
    "Entertainment Exhibit/Culture",
    "Personal care",
    "Games",
    "Social life",
    "Voluntary work",
    "Nothing special",
    "Break",
    "Other",
];

fn fold(label: &str) -> String {
    label.trim().to_lowercase()
}

/// Maps a raw diary label to its final class.
///
/// Matching ignores surrounding whitespace and letter case. Dropped and
/// unknown labels yield `None`.
pub fn map_activity(raw_label: &str) -> Option<ActivityClass> {
    let key = fold(raw_label);
    ActivityClass::ALL
        .into_iter()
        .find(|class| class.raw_labels().iter().any(|l| fold(l) == key))
}

/// One resampled 3×600 window with its label; the unit of learning.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub user_id: UserId,
    pub report_id: String,
    /// Time of grid point 0, in ms since epoch.
    pub grid_start_ms: i64,
    /// Rows are the x, y, z axes; columns are grid points.
    pub data: Array2<f64>,
    pub label: ActivityClass,
}

/// A violated window invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WindowViolation {
    RowCount { found: usize },
    ColumnCount { found: usize },
    NonFiniteValue { axis: usize, index: usize },
}

impl fmt::Display for WindowViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowViolation::RowCount { found } => {
                write!(f, "row count: expected {WINDOW_AXES}, found {found}")
            }
            WindowViolation::ColumnCount { found } => {
                write!(f, "column count: expected {WINDOW_LEN}, found {found}")
            }
            WindowViolation::NonFiniteValue { axis, index } => {
                write!(f, "non-finite value at axis {axis}, index {index}")
            }
        }
    }
}

/// Lists every invariant the window violates; empty means valid.
///
/// Only the first non-finite entry is reported.
pub fn validate_window(w: &LabeledWindow) -> Vec<WindowViolation> {
    let mut violations = Vec::new();
    let (rows, cols) = w.data.dim();
    if rows != WINDOW_AXES {
        violations.push(WindowViolation::RowCount { found: rows });
    }
    if cols != WINDOW_LEN {
        violations.push(WindowViolation::ColumnCount { found: cols });
    }
    if let Some(((axis, index), _)) = w.data.indexed_iter().find(|(_, v)| !v.is_finite()) {
        violations.push(WindowViolation::NonFiniteValue { axis, index });
    }
    violations
}

/// Why a report produced no window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    NoDataInPresenceWindow,
    TooFewSamples,
    DroppedClass,
}

impl DiscardReason {
    pub const ALL: [DiscardReason; 3] = [
        DiscardReason::NoDataInPresenceWindow,
        DiscardReason::TooFewSamples,
        DiscardReason::DroppedClass,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DiscardReason::NoDataInPresenceWindow => "no_data_in_presence_window",
            DiscardReason::TooFewSamples => "too_few_samples",
            DiscardReason::DroppedClass => "dropped_class",
        }
    }
}

impl fmt::Display for DiscardReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merged_and_identity_labels() {
        assert_eq!(map_activity("Social media"), Some(ActivityClass::OnlineCommunication));
        assert_eq!(map_activity("Sleeping"), Some(ActivityClass::Sleeping));
        assert_eq!(map_activity("Other shopping"), Some(ActivityClass::Shopping));
        assert_eq!(map_activity("  chatting/READING "), Some(ActivityClass::OnlineCommunication));
    }

    #[test]
    fn dropped_and_unknown_labels() {
        assert_eq!(map_activity("Travelling"), None);
        assert_eq!(map_activity("Break"), None);
        assert_eq!(map_activity("Knitting"), None);
        assert_eq!(map_activity(""), None);
        for label in DROPPED_LABELS {
            assert_eq!(map_activity(label), None, "{label}");
        }
    }

    #[test]
    fn codes_are_stable() {
        for (i, class) in ActivityClass::ALL.into_iter().enumerate() {
            assert_eq!(class.code() as usize, i);
            assert_eq!(ActivityClass::from_code(i as u8), Some(class));
            assert_eq!(class.slug().parse::<ActivityClass>().unwrap(), class);
        }
        assert_eq!(ActivityClass::from_code(8), None);
        let json = serde_json::to_string(&ActivityClass::WatchingVideos).unwrap();
        assert_eq!(json, "5");
    }

    fn window(cols: usize) -> LabeledWindow {
        LabeledWindow {
            user_id: "u1".into(),
            report_id: "r1".into(),
            grid_start_ms: 0,
            data: Array2::zeros((3, cols)),
            label: ActivityClass::Eating,
        }
    }

    #[test]
    fn window_validation() {
        assert!(validate_window(&window(600)).is_empty());
        assert_eq!(
            validate_window(&window(599)),
            vec![WindowViolation::ColumnCount { found: 599 }]
        );
        let mut w = window(600);
        w.data[[1, 17]] = f64::NAN;
        let v = validate_window(&w);
        assert_eq!(v, vec![WindowViolation::NonFiniteValue { axis: 1, index: 17 }]);
        assert!(v[0].to_string().starts_with("non-finite value"));
    }

    #[test]
    fn sample_and_report_invariants() {
        assert!(AccelSample::new("u".into(), -1, 0.0, 0.0, 0.0).is_err());
        assert!(AccelSample::new("u".into(), 0, f64::INFINITY, 0.0, 0.0).is_err());
        assert!(SelfReport::new("u".into(), "r", 2000, 1000, "Sleeping", None).is_err());
        assert!(SelfReport::new("u".into(), "r", 1000, 1000, "  ", None).is_err());
        assert!(SelfReport::new("u".into(), "r", 1000, 2000, "Sleeping", None).is_ok());
    }
}
