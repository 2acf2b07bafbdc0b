//! Parsing of accelerometer CSV logs and self-report JSON-lines logs, and
//! assembly of per-user timelines.
//!
//! Both parsers read row by row from any [`Read`] source. Rows that fail to
//! parse are skipped and counted rather than aborting the whole file.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::domain::{map_activity, AccelSample, ActivityClass, DiscardReason, SelfReport, UserId};
use crate::preprocess::{Outcome, ReportOutcome};

pub const ACCEL_HEADER: [&str; 5] = ["user_id", "timestamp_ms", "x", "y", "z"];

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unreadable header: {0}")]
    Header(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Streaming reader over an accelerometer CSV log.
///
/// Yields `Some(sample)` for valid rows and `None` for malformed rows.
pub struct AccelLogReader<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    users: BTreeMap<String, UserId>,
}

impl<R: Read> AccelLogReader<R> {
    pub fn new(reader: R) -> Result<Self, IngestError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header = rdr.headers().map_err(|e| IngestError::Header(e.to_string()))?;
        let fields: Vec<&str> = header.iter().map(str::trim).collect();
        if fields != ACCEL_HEADER {
            return Err(IngestError::Header(format!(
                "expected `{}`, found `{}`",
                ACCEL_HEADER.join(","),
                fields.join(",")
            )));
        }
        Ok(AccelLogReader {
            records: rdr.into_records(),
            users: BTreeMap::new(),
        })
    }

    fn user(&mut self, id: &str) -> UserId {
        if let Some(u) = self.users.get(id) {
            return u.clone();
        }
        let u = UserId::new(id);
        self.users.insert(id.to_string(), u.clone());
        u
    }

    fn parse_row(&mut self, record: &csv::StringRecord) -> Option<AccelSample> {
        if record.len() != ACCEL_HEADER.len() {
            return None;
        }
        let id = record.get(0)?.trim();
        if id.is_empty() {
            return None;
        }
        let t: i64 = record.get(1)?.trim().parse().ok()?;
        let mut axes = [0.0; 3];
        for (i, a) in axes.iter_mut().enumerate() {
            *a = record.get(2 + i)?.trim().parse().ok()?;
        }
        let user = self.user(id);
        AccelSample::new(user, t, axes[0], axes[1], axes[2]).ok()
    }
}

impl<R: Read> Iterator for AccelLogReader<R> {
    type Item = Result<Option<AccelSample>, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.records.next()? {
            Ok(record) => Some(Ok(self.parse_row(&record))),
            // Invalid UTF-8 in one row is a row-level failure.
            Err(e) if matches!(e.kind(), csv::ErrorKind::Utf8 { .. }) => Some(Ok(None)),
            Err(e) => Some(Err(e.into())),
        }
    }
}

/// Parsed rows plus the number of rows that were skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub items: Vec<T>,
    pub malformed: usize,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Parsed { items: Vec::new(), malformed: 0 }
    }
}

pub fn parse_accel_log<R: Read>(reader: R) -> Result<Parsed<AccelSample>, IngestError> {
    let mut out = Parsed::default();
    for row in AccelLogReader::new(reader)? {
        match row? {
            Some(s) => out.items.push(s),
            None => out.malformed += 1,
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
struct ReportLine {
    user_id: String,
    report_id: String,
    fill_start_ms: i64,
    fill_end_ms: i64,
    raw_activity: String,
    #[serde(default)]
    country: Option<String>,
}

fn parse_report_line(line: &str) -> Option<SelfReport> {
    let raw: ReportLine = serde_json::from_str(line).ok()?;
    if raw.user_id.is_empty() || raw.fill_start_ms < 0 {
        return None;
    }
    SelfReport::new(
        UserId::new(&raw.user_id),
        raw.report_id,
        raw.fill_start_ms,
        raw.fill_end_ms,
        raw.raw_activity,
        raw.country,
    )
    .ok()
}

/// Parses a self-report JSON-lines log. Blank lines are ignored.
pub fn parse_report_log<R: Read>(reader: R) -> Result<Parsed<SelfReport>, IngestError> {
    let mut out = Parsed::default();
    let mut reader = BufReader::new(reader);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        let Ok(line) = std::str::from_utf8(&buf) else {
            out.malformed += 1;
            continue;
        };
        if line.trim().is_empty() {
            continue;
        }
        match parse_report_line(line) {
            Some(r) => out.items.push(r),
            None => out.malformed += 1,
        }
    }
    Ok(out)
}

/// Every sample and report of one user, time-sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct UserTimeline {
    pub user_id: UserId,
    /// Strictly increasing in `t`.
    pub samples: Vec<AccelSample>,
    /// Sorted by `fill_start`.
    pub reports: Vec<SelfReport>,
}

/// Writes samples in the accelerometer CSV format read by [`parse_accel_log`].
///
/// Floats use the shortest representation that parses back to the same value.
pub fn write_accel_csv<'a, W, I>(samples: I, w: W) -> Result<(), csv::Error>
where
    W: Write,
    I: IntoIterator<Item = &'a AccelSample>,
{
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(ACCEL_HEADER)?;
    for s in samples {
        wtr.write_record([
            s.user_id.as_str(),
            &s.t.to_string(),
            &s.x.to_string(),
            &s.y.to_string(),
            &s.z.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes reports in the JSON-lines format read by [`parse_report_log`].
pub fn write_report_jsonl<'a, W, I>(reports: I, mut w: W) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a SelfReport>,
{
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes a timelines store: every user's samples to `accel` and reports to
/// `reports`, in timeline order.
pub fn write_timelines<A: Write, R: Write>(timelines: &[UserTimeline], accel: A, reports: R) -> Result<(), IngestError> {
    write_accel_csv(timelines.iter().flat_map(|t| &t.samples), accel)?;
    write_report_jsonl(timelines.iter().flat_map(|t| &t.reports), reports)?;
    Ok(())
}

/// Groups samples and reports by user.
///
/// Samples are sorted by time with duplicate timestamps resolved first-wins
/// (in input order). Timelines come out ordered by user id.
pub fn build_timelines(samples: Vec<AccelSample>, reports: Vec<SelfReport>) -> Vec<UserTimeline> {
    let mut by_user: BTreeMap<UserId, (Vec<(usize, AccelSample)>, Vec<SelfReport>)> =
        BTreeMap::new();
    for (i, s) in samples.into_iter().enumerate() {
        by_user.entry(s.user_id.clone()).or_default().0.push((i, s));
    }
    for r in reports {
        by_user.entry(r.user_id.clone()).or_default().1.push(r);
    }
    by_user
        .into_iter()
        .map(|(user_id, (mut indexed, mut reports))| {
            indexed.sort_by_key(|(i, s)| (s.t, *i));
            let mut samples: Vec<AccelSample> = Vec::with_capacity(indexed.len());
            for (_, s) in indexed {
                if samples.last().is_none_or(|last| last.t != s.t) {
                    samples.push(s);
                }
            }
            // Full ordering so shuffled input yields identical timelines.
            reports.sort_by(|a, b| {
                (a.fill_start, a.fill_end, &a.report_id, &a.raw_activity, &a.country).cmp(&(
                    b.fill_start,
                    b.fill_end,
                    &b.report_id,
                    &b.raw_activity,
                    &b.country,
                ))
            });
            UserTimeline { user_id, samples, reports }
        })
        .collect()
}

/// Descriptive statistics over a preprocessed corpus.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetSummary {
    /// Reports per raw (trimmed) diary label.
    pub raw_label_counts: BTreeMap<String, usize>,
    /// Emitted windows per final class.
    pub class_counts: BTreeMap<ActivityClass, usize>,
    pub users: usize,
    pub reports_total: usize,
    pub reports_discarded: usize,
    pub discards_by_reason: BTreeMap<DiscardReason, usize>,
}

impl DatasetSummary {
    pub fn class_count(&self, class: ActivityClass) -> usize {
        self.class_counts.get(&class).copied().unwrap_or(0)
    }

    pub fn discard_count(&self, reason: DiscardReason) -> usize {
        self.discards_by_reason.get(&reason).copied().unwrap_or(0)
    }

    /// Aligned plain-text rendering.
    pub fn to_text_table(&self) -> String {
        let width = self
            .raw_label_counts
            .keys()
            .map(|k| k.chars().count())
            .chain(ActivityClass::ALL.iter().map(|c| c.display_name().len()))
            .max()
            .unwrap_or(0)
            .max(28);
        let row = |k: &str, v: usize| format!("  {k:<width$}  {v:>8}\n");
        let mut out = String::new();
        out.push_str(&row("users", self.users));
        out.push_str(&row("reports", self.reports_total));
        out.push_str(&row("discarded", self.reports_discarded));
        out.push_str("Reports per raw activity\n");
        for (label, n) in &self.raw_label_counts {
            out.push_str(&row(label, *n));
        }
        out.push_str("Windows per final class\n");
        for class in ActivityClass::ALL {
            out.push_str(&row(class.display_name(), self.class_count(class)));
        }
        out.push_str("Discards by reason\n");
        for reason in DiscardReason::ALL {
            out.push_str(&row(reason.as_str(), self.discard_count(reason)));
        }
        out
    }

    /// CSV with columns `section,key,count`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["section", "key", "count"])?;
        let totals = [
            ("users", self.users),
            ("reports", self.reports_total),
            ("discarded", self.reports_discarded),
        ];
        for (k, v) in totals {
            wtr.write_record(["total", k, &v.to_string()])?;
        }
        for (label, n) in &self.raw_label_counts {
            wtr.write_record(["raw_label", label, &n.to_string()])?;
        }
        for class in ActivityClass::ALL {
            wtr.write_record(["class", class.slug(), &self.class_count(class).to_string()])?;
        }
        for reason in DiscardReason::ALL {
            wtr.write_record(["discard", reason.as_str(), &self.discard_count(reason).to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Summarizes a corpus from its timelines and the per-report outcome log.
pub fn summarize_dataset(timelines: &[UserTimeline], outcomes: &[ReportOutcome]) -> DatasetSummary {
    let mut users: BTreeSet<&UserId> = timelines.iter().map(|t| &t.user_id).collect();
    users.extend(outcomes.iter().map(|o| &o.user_id));
    summarize_outcomes(users.len(), outcomes)
}

/// Summary from the outcome log alone, for corpora whose timelines are not at hand.
pub fn summarize_outcomes(users: usize, outcomes: &[ReportOutcome]) -> DatasetSummary {
    let mut summary = DatasetSummary {
        users,
        reports_total: outcomes.len(),
        ..Default::default()
    };
    for o in outcomes {
        *summary
            .raw_label_counts
            .entry(o.raw_activity.trim().to_string())
            .or_default() += 1;
        match o.outcome {
            Outcome::Emitted => {
                if let Some(class) = o.class.or_else(|| map_activity(&o.raw_activity)) {
                    *summary.class_counts.entry(class).or_default() += 1;
                }
            }
            Outcome::Discarded(reason) => {
                summary.reports_discarded += 1;
                *summary.discards_by_reason.entry(reason).or_default() += 1;
            }
        }
    }
    summary
}
