//! CSV and markdown renderings of an [`EvalReport`].

use std::fmt::Write as _;
use std::io::Write;

use super::experiment::{CellResult, EvalReport};
use super::metrics::MetricSet;
use super::split::SplitKind;
use super::task::TaskMode;
use crate::domain::ActivityClass;

pub const CSV_HEADER: [&str; 7] = ["activity", "split_kind", "mode", "metric", "mean", "std", "repetitions"];

/// One row per (cell, metric). Absent cells have `NA` values and 0 repetitions.
pub fn write_csv<W: Write>(report: &EvalReport, w: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(CSV_HEADER)?;
    for cell in &report.cells {
        for (m, name) in MetricSet::NAMES.iter().enumerate() {
            let (mean, std, reps) = match &cell.result {
                CellResult::Ok(s) => (
                    format!("{:.6}", s.mean.values()[m]),
                    format!("{:.6}", s.std.values()[m]),
                    s.repetitions.to_string(),
                ),
                CellResult::Absent { .. } => ("NA".to_string(), "NA".to_string(), "0".to_string()),
            };
            wtr.write_record([
                cell.key.activity.slug(),
                cell.key.split_kind.as_str(),
                cell.key.mode.as_str(),
                name,
                &mean,
                &std,
                &reps,
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn csv_string(report: &EvalReport) -> String {
    let mut out = Vec::new();
    write_csv(report, &mut out).expect("writing to memory");
    String::from_utf8(out).expect("csv is utf-8")
}

fn block(report: &EvalReport, activity: ActivityClass, kind: SplitKind, mode: TaskMode) -> [String; 6] {
    match report.summary(activity, kind, mode) {
        Some(s) => [
            format!("{:.2}", s.mean.auroc),
            format!("{:.2}", s.std.auroc),
            format!("{:.2}", s.mean.f1_macro),
            format!("{:.2}", s.std.f1_macro),
            format!("{:.1}", 100.0 * s.mean.accuracy),
            format!("{:.1}", 100.0 * s.std.accuracy),
        ],
        None => std::array::from_fn(|_| "n/a".to_string()),
    }
}

fn kind_title(kind: SplitKind) -> &'static str {
    match kind {
        SplitKind::Population => "Population-level results",
        SplitKind::Hybrid => "Hybrid results",
    }
}

/// One table per split kind: activity rows, balanced columns then imbalanced
/// columns, each as AUROC / F1 / accuracy (%) mean and std.
pub fn render_markdown(report: &EvalReport) -> String {
    let mut out = String::new();
    let mut kinds: Vec<SplitKind> = report.cells.iter().map(|c| c.key.split_kind).collect();
    kinds.sort();
    kinds.dedup();
    let mut activities: Vec<ActivityClass> = report.cells.iter().map(|c| c.key.activity).collect();
    activities.sort();
    activities.dedup();

    for kind in kinds {
        let _ = writeln!(out, "## {} ({} repetitions)\n", kind_title(kind), report.repetitions);
        let mut header = String::from("| Activity |");
        for mode in TaskMode::ALL {
            for metric in ["AUROC", "F1", "Acc (%)"] {
                let _ = write!(header, " {mode} {metric} mean | {mode} {metric} std |");
            }
        }
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "|---|{}", "---:|".repeat(12));
        for &activity in &activities {
            let mut row = format!("| {} |", activity.display_name());
            for mode in TaskMode::ALL {
                for v in block(report, activity, kind, mode) {
                    let _ = write!(row, " {v} |");
                }
            }
            let _ = writeln!(out, "{row}");
        }
        out.push('\n');

        let absent: Vec<_> = report
            .cells
            .iter()
            .filter(|c| c.key.split_kind == kind)
            .filter_map(|c| match &c.result {
                CellResult::Absent { reason } => Some((c.key, reason)),
                CellResult::Ok(_) => None,
            })
            .collect();
        if !absent.is_empty() {
            let _ = writeln!(out, "Missing cells:\n");
            for (key, reason) in absent {
                let _ = writeln!(out, "- {} / {}: {reason}", key.activity.display_name(), key.mode);
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::experiment::{CellKey, CellSummary, ReportCell};

    fn report() -> EvalReport {
        let ok = CellResult::Ok(CellSummary {
            mean: MetricSet { auroc: 0.6211, f1_macro: 0.5, accuracy: 0.9 },
            std: MetricSet { auroc: 0.0, f1_macro: 0.1, accuracy: 0.02 },
            repetitions: 2,
            seeds: vec![1, 2],
        });
        EvalReport {
            repetitions: 2,
            base_seed: 0,
            cells: vec![
                ReportCell {
                    key: CellKey { activity: ActivityClass::Sleeping, split_kind: SplitKind::Hybrid, mode: TaskMode::Balanced },
                    result: ok,
                },
                ReportCell {
                    key: CellKey { activity: ActivityClass::Sleeping, split_kind: SplitKind::Hybrid, mode: TaskMode::Imbalanced },
                    result: CellResult::Absent { reason: "test partition has no sleeping windows".into() },
                },
            ],
        }
    }

    #[test]
    fn csv_rows() {
        let text = csv_string(&report());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "activity,split_kind,mode,metric,mean,std,repetitions");
        assert_eq!(lines[1], "sleeping,hybrid,balanced,auroc,0.621100,0.000000,2");
        assert_eq!(lines[6], "sleeping,hybrid,imbalanced,accuracy,NA,NA,0");
        assert_eq!(lines.len(), 7);
    }

    #[test]
    fn markdown_layout() {
        let md = render_markdown(&report());
        assert!(md.contains("## Hybrid results"));
        assert!(!md.contains("Population"));
        let row = md.lines().find(|l| l.starts_with("| Sleeping")).unwrap();
        assert_eq!(row.matches('|').count(), 14);
        assert!(row.contains("| 0.62 | 0.00 | 0.50 | 0.10 | 90.0 | 2.0 | n/a |"), "{row}");
        assert!(md.contains("Missing cells"));
    }
}
