mod common;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

use common::*;
use har_core::ingest::{write_accel_csv, write_report_jsonl};

fn har(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_har"))
        .current_dir(dir)
        .arg("--quiet")
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Raw logs for one user: dense data with one report per label.
fn write_fixture(dir: &Path, labels: &[&str], malformed_rows: usize) {
    let hour = 3_600_000;
    let samples = grid_samples("u1", 0, (labels.len() as i64 + 1) * hour, |t| [(t % 5) as f64, 0.1, 9.8]);
    let reports: Vec<_> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| report("u1", &format!("r{i}"), (i as i64 + 1) * hour, l))
        .collect();
    let mut accel = fs::File::create(dir.join("accel.csv")).unwrap();
    write_accel_csv(&samples, &mut accel).unwrap();
    for i in 0..malformed_rows {
        writeln!(accel, "u1,not-a-time,{i},0,0").unwrap();
    }
    write_report_jsonl(&reports, fs::File::create(dir.join("reports.jsonl")).unwrap()).unwrap();
}

#[test]
fn ingest_writes_timelines_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    write_fixture(tmp.path(), &["Sleeping"], 0);
    let out = har(tmp.path(), &["ingest", "--accel", "accel.csv", "--reports", "reports.jsonl", "--out", "tl"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for f in ["accel.csv", "reports.jsonl", "ingest.manifest.txt"] {
        assert!(tmp.path().join("tl").join(f).is_file(), "{f}");
    }
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = har(tmp.path(), &["ingest", "--accel", "nowhere.csv", "--reports", "reports.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nowhere.csv"), "{}", stderr(&out));
}

#[test]
fn ingest_counts_malformed_rows() {
    let tmp = tempfile::tempdir().unwrap();
    write_fixture(tmp.path(), &["Sleeping"], 3);
    let out = har(tmp.path(), &["ingest", "--accel", "accel.csv", "--reports", "reports.jsonl", "--out", "tl"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("3 malformed rows"), "{}", stderr(&out));
}

fn stats_table(dir: &Path, labels: &[&str]) -> String {
    write_fixture(dir, labels, 0);
    let conf = "accel_path = accel.csv\nreports_path = reports.jsonl\n";
    fs::write(dir.join("run.conf"), conf).unwrap();
    for cmd in ["ingest", "preprocess"] {
        let out = har(dir, &["--config", "run.conf", cmd]);
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", stderr(&out));
    }
    let out = har(dir, &["--config", "run.conf", "stats"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    String::from_utf8(out.stdout).unwrap()
}

fn row_value(table: &str, key: &str) -> usize {
    let line = table.lines().find(|l| l.trim_start().starts_with(key)).unwrap_or_else(|| panic!("{key} in\n{table}"));
    line.split_whitespace().last().unwrap().parse().unwrap()
}

#[test]
fn stats_on_empty_dataset_is_all_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let table = stats_table(tmp.path(), &[]);
    for key in ["reports", "discarded", "Sleeping", "Shopping", "dropped_class"] {
        assert_eq!(row_value(&table, key), 0, "{key}");
    }
}

#[test]
fn stats_breaks_down_discards() {
    let tmp = tempfile::tempdir().unwrap();
    let table = stats_table(tmp.path(), &["Sleeping", "Break", "Eating", "Travelling", "Sleeping"]);
    assert_eq!(row_value(&table, "reports"), 5);
    assert_eq!(row_value(&table, "discarded"), 2);
    assert_eq!(row_value(&table, "dropped_class"), 2);
    assert_eq!(row_value(&table, "Sleeping"), 2);
    assert!(tmp.path().join("dataset/summary.csv").is_file());
}

#[test]
fn zero_repetitions_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.conf"), "repetitions = 0\n").unwrap();
    let out = har(tmp.path(), &["--config", "bad.conf", "evaluate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("repetitions"), "{}", stderr(&out));
}

#[test]
fn end_to_end_run_is_reproducible_from_its_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let conf = "accel_path = synth/accel.csv\n\
                reports_path = synth/reports.jsonl\n\
                synth_users = 16\n\
                synth_reports_per_user = 24\n\
                repetitions = 1\n\
                epochs = 2\n\
                seed = 5\n";
    fs::write(dir.join("run.conf"), conf).unwrap();
    for cmd in ["synth", "ingest", "preprocess", "evaluate", "report"] {
        let out = har(dir, &["--config", "run.conf", cmd]);
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", stderr(&out));
    }
    let csv = fs::read_to_string(dir.join("reports/report.csv")).unwrap();
    // 8 activities × 2 split kinds × 2 modes, three metric rows each.
    assert_eq!(csv.lines().count(), 1 + 32 * 3);
    assert!(fs::read_to_string(dir.join("reports/report.md")).unwrap().contains("Hybrid results"));

    fs::rename(dir.join("reports/report.csv"), dir.join("first.csv")).unwrap();
    let out = har(dir, &["--config", "reports/evaluate.manifest.txt", "evaluate"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(fs::read(dir.join("first.csv")).unwrap(), fs::read(dir.join("reports/report.csv")).unwrap());
}
