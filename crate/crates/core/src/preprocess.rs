//! Window extraction: each report becomes a 3×600 window covering the three
//! minutes before the participant started filling it in, resampled onto a
//! 300 ms grid.
//!
//! The window is anchored at `fill_start`, so the selection interval
//! `[fill_start - 180 s, fill_start)` never overlaps the fill period. A report
//! is usable only if its user has some sample within ±300 s of `fill_start`.

use std::io::{BufRead, BufReader, Read, Write};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    map_activity, validate_window, AccelSample, ActivityClass, DiscardReason, LabeledWindow, SelfReport,
    UserId, GRID_STEP_MS, WINDOW_AXES, WINDOW_LEN,
};
use crate::ingest::UserTimeline;

/// Length of the selection interval before `fill_start`.
pub const SELECTION_MS: i64 = GRID_STEP_MS * WINDOW_LEN as i64;
/// Half-width of the data-presence window around `fill_start`.
pub const PRESENCE_HALF_WIDTH_MS: i64 = 300_000;
/// Maximum distance from a grid point to a sample used to fill it.
pub const MAX_BRACKET_MS: i64 = 1_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PreprocessError {
    #[error("report {report_id} belongs to user {report_user}, not timeline user {timeline_user}")]
    UserMismatch {
        report_id: String,
        report_user: UserId,
        timeline_user: UserId,
    },
}

/// Samples selected for one report, before resampling.
#[derive(Debug, Clone, PartialEq)]
pub struct RawWindow<'a> {
    pub user_id: UserId,
    pub report_id: String,
    /// Inclusive.
    pub window_start: i64,
    /// Exclusive; equals the report's `fill_start`.
    pub window_end: i64,
    pub samples: &'a [AccelSample],
}

/// Selects the samples for `report` out of `timeline`.
pub fn extract_window<'a>(
    timeline: &'a UserTimeline,
    report: &SelfReport,
) -> Result<Result<RawWindow<'a>, DiscardReason>, PreprocessError> {
    if report.user_id != timeline.user_id {
        return Err(PreprocessError::UserMismatch {
            report_id: report.report_id.clone(),
            report_user: report.user_id.clone(),
            timeline_user: timeline.user_id.clone(),
        });
    }
    let samples = &timeline.samples;
    let lower_bound = |t: i64| samples.partition_point(|s| s.t < t);

    let anchor = report.fill_start;
    let presence_lo = lower_bound(anchor.saturating_sub(PRESENCE_HALF_WIDTH_MS));
    let present = samples
        .get(presence_lo)
        .is_some_and(|s| s.t <= anchor.saturating_add(PRESENCE_HALF_WIDTH_MS));
    if !present {
        return Ok(Err(DiscardReason::NoDataInPresenceWindow));
    }

    let window_start = anchor - SELECTION_MS;
    let window_end = anchor;
    let lo = lower_bound(window_start);
    let hi = lower_bound(window_end);
    Ok(Ok(RawWindow {
        user_id: report.user_id.clone(),
        report_id: report.report_id.clone(),
        window_start,
        window_end,
        samples: &samples[lo..hi],
    }))
}

fn lerp_clamped(v0: f64, v1: f64, frac: f64) -> f64 {
    let v = v0 + (v1 - v0) * frac;
    v.clamp(v0.min(v1), v0.max(v1))
}

/// Resamples a raw window onto the 600-point grid starting at `window_start`.
///
/// Grid points between two samples are linearly interpolated when both
/// neighbours lie within [`MAX_BRACKET_MS`]. Grid points before the first or
/// after the last sample copy that sample if it lies within the same limit.
/// Any other grid point is uncovered and the whole window is discarded.
pub fn resample(raw: &RawWindow<'_>) -> Result<Array2<f64>, DiscardReason> {
    let samples = raw.samples;
    if samples.is_empty() {
        return Err(DiscardReason::TooFewSamples);
    }
    let mut out = Array2::zeros((WINDOW_AXES, WINDOW_LEN));
    // Index of the first sample with t >= grid time; grid times increase so it only moves forward.
    let mut right = 0usize;
    for k in 0..WINDOW_LEN {
        let g = raw.window_start + k as i64 * GRID_STEP_MS;
        while right < samples.len() && samples[right].t < g {
            right += 1;
        }
        let next = samples.get(right);
        let prev = right.checked_sub(1).map(|i| &samples[i]);
        match (prev, next) {
            (_, Some(s)) if s.t == g => {
                for a in 0..WINDOW_AXES {
                    out[[a, k]] = s.axis(a);
                }
            }
            (Some(p), Some(n)) => {
                if g - p.t > MAX_BRACKET_MS || n.t - g > MAX_BRACKET_MS {
                    return Err(DiscardReason::TooFewSamples);
                }
                let frac = (g - p.t) as f64 / (n.t - p.t) as f64;
                for a in 0..WINDOW_AXES {
                    out[[a, k]] = lerp_clamped(p.axis(a), n.axis(a), frac);
                }
            }
            (Some(s), None) | (None, Some(s)) => {
                if (s.t - g).abs() > MAX_BRACKET_MS {
                    return Err(DiscardReason::TooFewSamples);
                }
                for a in 0..WINDOW_AXES {
                    out[[a, k]] = s.axis(a);
                }
            }
            (None, None) => unreachable!("samples is non-empty"),
        }
    }
    Ok(out)
}

/// What happened to one report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum Outcome {
    Emitted,
    Discarded(DiscardReason),
}

/// One entry of the per-report outcome log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOutcome {
    pub user_id: UserId,
    pub report_id: String,
    pub fill_start_ms: i64,
    pub raw_activity: String,
    /// Final class, when the raw label maps to one.
    pub class: Option<ActivityClass>,
    #[serde(flatten)]
    pub outcome: Outcome,
}

/// Windows and the full outcome log for a set of timelines.
#[derive(Debug, Clone, Default)]
pub struct BuiltDataset {
    pub windows: Vec<LabeledWindow>,
    pub outcomes: Vec<ReportOutcome>,
}

fn process_report(timeline: &UserTimeline, report: &SelfReport) -> (ReportOutcome, Option<LabeledWindow>) {
    let class = map_activity(&report.raw_activity);
    let result = match class {
        None => Err(DiscardReason::DroppedClass),
        Some(label) => extract_window(timeline, report)
            .expect("report taken from its own timeline")
            .and_then(|raw| {
                let data = resample(&raw)?;
                Ok(LabeledWindow {
                    user_id: raw.user_id,
                    report_id: raw.report_id,
                    grid_start_ms: raw.window_start,
                    data,
                    label,
                })
            }),
    };
    let outcome = ReportOutcome {
        user_id: report.user_id.clone(),
        report_id: report.report_id.clone(),
        fill_start_ms: report.fill_start,
        raw_activity: report.raw_activity.clone(),
        class,
        outcome: match &result {
            Ok(_) => Outcome::Emitted,
            Err(reason) => Outcome::Discarded(*reason),
        },
    };
    (outcome, result.ok())
}

/// Runs window extraction over every report of every timeline.
///
/// Output order follows the timelines (user id) and then `fill_start`.
pub fn build_dataset(timelines: &[UserTimeline]) -> BuiltDataset {
    let per_user: Vec<Vec<(ReportOutcome, Option<LabeledWindow>)>> = timelines
        .par_iter()
        .map(|timeline| timeline.reports.iter().map(|r| process_report(timeline, r)).collect())
        .collect();
    let mut built = BuiltDataset::default();
    for (outcome, window) in per_user.into_iter().flatten() {
        built.outcomes.push(outcome);
        built.windows.extend(window);
    }
    built
}

/// One line of `windows.jsonl`.
#[derive(Serialize, Deserialize)]
struct WindowRecord {
    user_id: UserId,
    report_id: String,
    grid_start_ms: i64,
    label: ActivityClass,
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {detail}")]
    Line { line: usize, detail: String },
}

fn write_jsonl<W: Write, T: Serialize>(items: impl IntoIterator<Item = T>, mut w: W) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

fn read_jsonl<R: Read, T, F>(r: R, mut convert: F) -> Result<Vec<T>, DatasetFileError>
where
    F: FnMut(&str) -> Result<T, String>,
{
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(convert(&line).map_err(|detail| DatasetFileError::Line { line: i + 1, detail })?);
    }
    Ok(out)
}

/// Writes windows as JSON lines with one array per axis.
pub fn write_windows_jsonl<W: Write>(windows: &[LabeledWindow], w: W) -> std::io::Result<()> {
    write_jsonl(
        windows.iter().map(|win| WindowRecord {
            user_id: win.user_id.clone(),
            report_id: win.report_id.clone(),
            grid_start_ms: win.grid_start_ms,
            label: win.label,
            x: win.data.row(0).to_vec(),
            y: win.data.row(1).to_vec(),
            z: win.data.row(2).to_vec(),
        }),
        w,
    )
}

/// Reads `windows.jsonl`, rejecting any window that is not a finite 3×600 matrix.
pub fn read_windows_jsonl<R: Read>(r: R) -> Result<Vec<LabeledWindow>, DatasetFileError> {
    read_jsonl(r, |line| {
        let rec: WindowRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let mut values = Vec::with_capacity(WINDOW_AXES * WINDOW_LEN);
        for axis in [&rec.x, &rec.y, &rec.z] {
            if axis.len() != WINDOW_LEN {
                return Err(format!("axis has {} values, expected {WINDOW_LEN}", axis.len()));
            }
            values.extend_from_slice(axis);
        }
        let window = LabeledWindow {
            user_id: rec.user_id,
            report_id: rec.report_id,
            grid_start_ms: rec.grid_start_ms,
            data: Array2::from_shape_vec((WINDOW_AXES, WINDOW_LEN), values).expect("length checked"),
            label: rec.label,
        };
        match validate_window(&window).first() {
            Some(v) => Err(v.to_string()),
            None => Ok(window),
        }
    })
}

pub fn write_outcomes_jsonl<W: Write>(outcomes: &[ReportOutcome], w: W) -> std::io::Result<()> {
    write_jsonl(outcomes, w)
}

pub fn read_outcomes_jsonl<R: Read>(r: R) -> Result<Vec<ReportOutcome>, DatasetFileError> {
    read_jsonl(r, |line| serde_json::from_str(line).map_err(|e| e.to_string()))
}
