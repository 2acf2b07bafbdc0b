//! The `har` command line: flat config files, subcommands and exit codes.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::domain::{ActivityClass, LabeledWindow, WINDOW_AXES, WINDOW_LEN};
use crate::evaluation::experiment::{run_experiment, EvalReport, ExperimentConfig, JobKey};
use crate::evaluation::metrics::MetricSet;
use crate::evaluation::report::{render_markdown, write_csv};
use crate::evaluation::split::{split, SplitFractions, SplitKind};
use crate::evaluation::task::{make_task, TaskMode};
use crate::ingest::{
    build_timelines, parse_accel_log, parse_report_log, summarize_outcomes, write_timelines, UserTimeline,
};
use crate::neuralnet::{write_artifact, NetworkSpec, ARTIFACT_VERSION};
use crate::preprocess::{
    build_dataset, read_outcomes_jsonl, read_windows_jsonl, write_outcomes_jsonl, write_windows_jsonl,
};
use crate::seeds::derive_seed;
use crate::synthgen::{generate_corpus, ProfileSet, SynthConfig};
use crate::trainer::{predict_examples, train_binary, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ALL_FAILED: i32 = 3;

/// Version tag of the windows/outcomes JSON-lines files.
pub const DATASET_FORMAT_VERSION: u32 = 1;

pub const ACCEL_FILE: &str = "accel.csv";
pub const REPORTS_FILE: &str = "reports.jsonl";
pub const TRUTH_FILE: &str = "truth.jsonl";
pub const WINDOWS_FILE: &str = "windows.jsonl";
pub const OUTCOMES_FILE: &str = "outcomes.jsonl";
pub const USERS_FILE: &str = "users.txt";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const REPORT_MD_FILE: &str = "report.md";
pub const MODEL_INDEX_FILE: &str = "models.csv";

#[derive(Debug, Parser)]
#[command(name = "har", version, about = "Activity recognition from smartphone accelerometer logs")]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Maximum number of concurrent training jobs.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Only print warnings and errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse raw logs into a timelines store.
    Ingest {
        #[arg(long)]
        accel: Option<PathBuf>,
        #[arg(long)]
        reports: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print report and discard counts for a preprocessed dataset.
    Stats {
        /// Dataset directory; defaults to `dataset_dir`.
        dataset: Option<PathBuf>,
    },
    /// Extract labeled windows from a timelines store.
    Preprocess,
    /// Generate a synthetic corpus.
    Synth,
    /// Train one model per (activity, split kind, mode).
    Train,
    /// Run the repeated-split experiment.
    Evaluate,
    /// Render an evaluation report as markdown and CSV.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Stats { .. } => "stats",
            Command::Preprocess => "preprocess",
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Report => "report",
        }
    }
}

/// A command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

type CmdResult = Result<(), Failure>;

// ---------------------------------------------------------------------------
// Config

/// Everything a run needs, as read from a flat config file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub accel_path: PathBuf,
    pub reports_path: PathBuf,
    pub timelines_dir: PathBuf,
    pub dataset_dir: PathBuf,
    pub models_dir: PathBuf,
    pub reports_dir: PathBuf,
    pub synth_dir: PathBuf,
    pub network: NetworkSpec,
    pub train: TrainConfig,
    pub activities: Vec<ActivityClass>,
    pub split_kinds: Vec<SplitKind>,
    pub modes: Vec<TaskMode>,
    pub repetitions: usize,
    pub fractions: SplitFractions,
    pub seed: u64,
    pub synth: SynthConfig,
}

impl RunConfig {
    /// Defaults with relative paths resolved against `base`.
    pub fn defaults(base: &Path) -> Self {
        RunConfig {
            accel_path: base.join(ACCEL_FILE),
            reports_path: base.join(REPORTS_FILE),
            timelines_dir: base.join("timelines"),
            dataset_dir: base.join("dataset"),
            models_dir: base.join("models"),
            reports_dir: base.join("reports"),
            synth_dir: base.join("synth"),
            network: NetworkSpec::reference(),
            train: TrainConfig::default(),
            activities: ActivityClass::ALL.to_vec(),
            split_kinds: SplitKind::ALL.to_vec(),
            modes: TaskMode::ALL.to_vec(),
            repetitions: 10,
            fractions: SplitFractions::default(),
            seed: 0,
            synth: SynthConfig::default(),
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            activities: self.activities.clone(),
            split_kinds: self.split_kinds.clone(),
            modes: self.modes.clone(),
            repetitions: self.repetitions,
            base_seed: self.seed,
            fractions: self.fractions,
            spec: self.network.clone(),
            train: self.train,
        }
    }

    fn synth_config(&self) -> SynthConfig {
        SynthConfig { seed: self.seed, ..self.synth.clone() }
    }

    /// The config as `key = value` text that [`parse_config`] reads back to
    /// an equal value.
    pub fn to_text(&self) -> String {
        let list = |items: Vec<String>| items.join(", ");
        let network = if self.network == NetworkSpec::reference() {
            "reference".to_string()
        } else {
            self.network.to_compact()
        };
        let t = &self.train;
        let s = &self.synth;
        let entries: Vec<(&str, String)> = vec![
            ("accel_path", self.accel_path.display().to_string()),
            ("reports_path", self.reports_path.display().to_string()),
            ("timelines_dir", self.timelines_dir.display().to_string()),
            ("dataset_dir", self.dataset_dir.display().to_string()),
            ("models_dir", self.models_dir.display().to_string()),
            ("reports_dir", self.reports_dir.display().to_string()),
            ("synth_dir", self.synth_dir.display().to_string()),
            ("network", network),
            ("epochs", t.epochs.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("learning_rate", t.adam.learning_rate.to_string()),
            ("beta1", t.adam.beta1.to_string()),
            ("beta2", t.adam.beta2.to_string()),
            ("epsilon", t.adam.epsilon.to_string()),
            ("patience", t.patience.to_string()),
            ("activities", list(self.activities.iter().map(|a| a.slug().to_string()).collect())),
            ("split_kinds", list(self.split_kinds.iter().map(|k| k.to_string()).collect())),
            ("modes", list(self.modes.iter().map(|m| m.to_string()).collect())),
            ("repetitions", self.repetitions.to_string()),
            ("train_fraction", self.fractions.train.to_string()),
            ("validation_fraction", self.fractions.validation.to_string()),
            ("test_fraction", self.fractions.test.to_string()),
            ("seed", self.seed.to_string()),
            ("synth_users", s.users.to_string()),
            ("synth_reports_per_user", s.reports_per_user.to_string()),
            ("synth_class_probs", list(s.class_probs.iter().map(f64::to_string).collect())),
            ("synth_separability", s.separability.to_string()),
            ("synth_missing_rate", s.missing_rate.to_string()),
            ("synth_jitter_ms", s.jitter_std_ms.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in entries {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

/// A problem with one config field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

fn parse_num<T: std::str::FromStr>(v: &str, what: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("expected {what}, got `{v}`"))
}

fn parse_list<T>(v: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let items: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err("list is empty".into());
    }
    items.into_iter().map(parse).collect()
}

fn parse_activities(v: &str) -> Result<Vec<ActivityClass>, String> {
    if v.trim().eq_ignore_ascii_case("all") {
        return Ok(ActivityClass::ALL.to_vec());
    }
    let list = parse_list(v, |s| s.parse::<ActivityClass>().map_err(|e| e.to_string()))?;
    let unique: BTreeSet<_> = list.iter().collect();
    if unique.len() != list.len() {
        return Err("activity listed twice".into());
    }
    Ok(list)
}

fn dedup_check<T: Ord>(list: Vec<T>) -> Result<Vec<T>, String> {
    let unique: BTreeSet<_> = list.iter().collect();
    if unique.len() != list.len() {
        return Err("value listed twice".into());
    }
    Ok(list)
}

fn apply_key(cfg: &mut RunConfig, key: &str, v: &str, base: &Path) -> Result<(), String> {
    let path = || base.join(v);
    let pos_usize = |what: &str| -> Result<usize, String> {
        let n: usize = parse_num(v, what)?;
        if n == 0 {
            return Err(format!("expected {what}, got `{v}`"));
        }
        Ok(n)
    };
    match key {
        "accel_path" => cfg.accel_path = path(),
        "reports_path" => cfg.reports_path = path(),
        "timelines_dir" => cfg.timelines_dir = path(),
        "dataset_dir" => cfg.dataset_dir = path(),
        "models_dir" => cfg.models_dir = path(),
        "reports_dir" => cfg.reports_dir = path(),
        "synth_dir" => cfg.synth_dir = path(),
        "network" => {
            cfg.network = if v.eq_ignore_ascii_case("reference") {
                NetworkSpec::reference()
            } else {
                NetworkSpec::from_compact(v, WINDOW_AXES, WINDOW_LEN).map_err(|e| e.to_string())?
            }
        }
        "epochs" => cfg.train.epochs = pos_usize("a positive integer")?,
        "batch_size" => cfg.train.batch_size = pos_usize("a positive integer")?,
        "patience" => cfg.train.patience = pos_usize("a positive integer")?,
        "learning_rate" => cfg.train.adam.learning_rate = parse_num(v, "a number")?,
        "beta1" => cfg.train.adam.beta1 = parse_num(v, "a number")?,
        "beta2" => cfg.train.adam.beta2 = parse_num(v, "a number")?,
        "epsilon" => cfg.train.adam.epsilon = parse_num(v, "a number")?,
        "activities" => cfg.activities = parse_activities(v)?,
        "split_kinds" => cfg.split_kinds = dedup_check(parse_list(v, |s| s.parse())?)?,
        "modes" => cfg.modes = dedup_check(parse_list(v, |s| s.parse())?)?,
        "repetitions" => cfg.repetitions = pos_usize("a positive integer")?,
        "train_fraction" => cfg.fractions.train = parse_num(v, "a number")?,
        "validation_fraction" => cfg.fractions.validation = parse_num(v, "a number")?,
        "test_fraction" => cfg.fractions.test = parse_num(v, "a number")?,
        "seed" => cfg.seed = parse_num(v, "a non-negative integer")?,
        "synth_users" => cfg.synth.users = parse_num(v, "a non-negative integer")?,
        "synth_reports_per_user" => cfg.synth.reports_per_user = parse_num(v, "a non-negative integer")?,
        "synth_class_probs" => {
            let probs = parse_list(v, |s| parse_num::<f64>(s, "a number"))?;
            cfg.synth.class_probs = probs
                .try_into()
                .map_err(|p: Vec<f64>| format!("expected 8 probabilities, got {}", p.len()))?;
        }
        "synth_separability" => cfg.synth.separability = parse_num(v, "a number")?,
        "synth_missing_rate" => cfg.synth.missing_rate = parse_num(v, "a number")?,
        "synth_jitter_ms" => cfg.synth.jitter_std_ms = parse_num(v, "a number")?,
        _ => return Err("unknown key".into()),
    }
    Ok(())
}

/// Parses config text. Relative paths resolve against `base`. Every problem
/// is reported, not just the first.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig, Vec<ConfigError>> {
    let mut cfg = RunConfig::defaults(base);
    let mut errors = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(ConfigError { line: Some(i + 1), key: line.to_string(), message: "expected `key = value`".into() });
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            errors.push(ConfigError { line: Some(i + 1), key: key.into(), message: "set more than once".into() });
            continue;
        }
        if let Err(message) = apply_key(&mut cfg, key, value, base) {
            errors.push(ConfigError { line: Some(i + 1), key: key.into(), message });
        }
    }
    errors.extend(validate(&cfg));
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

/// Cross-field checks that single-key parsing cannot catch.
pub fn validate(cfg: &RunConfig) -> Vec<ConfigError> {
    let mut errors = Vec::new();
    let mut err = |key: &str, message: String| errors.push(ConfigError { line: None, key: key.into(), message });
    if let Err(e) = cfg.train.adam.validate() {
        err("learning_rate/beta1/beta2/epsilon", e);
    }
    if let Err(e) = cfg.fractions.validate() {
        err("train_fraction/validation_fraction/test_fraction", e.to_string());
    }
    if let Err(e) = cfg.network.shapes() {
        err("network", e.to_string());
    }
    if let Err(e) = cfg.synth_config().validate() {
        err("synth", e.to_string());
    }
    errors
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        None => RunConfig::defaults(Path::new("")),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
            let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let base = std::path::absolute(parent)
                .map_err(|e| io_failure(path, e))?;
            parse_config(&text, &base).map_err(|errors| {
                let lines: Vec<String> = errors.iter().map(|e| format!("  {e}")).collect();
                Failure::usage(format!("invalid config {}:\n{}", path.display(), lines.join("\n")))
            })?
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// File helpers

fn io_failure(path: &Path, e: impl fmt::Display) -> Failure {
    Failure::usage(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| io_failure(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn create_dir(path: &Path) -> CmdResult {
    fs::create_dir_all(path).map_err(|e| io_failure(path, e))
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig) -> CmdResult {
    let text = format!(
        "# har {command} run, version {}\n# formats: dataset v{DATASET_FORMAT_VERSION}, model artifact v{ARTIFACT_VERSION}\n# all randomness derives from `seed`\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.to_text()
    );
    write_file(&dir.join(format!("{command}.manifest.txt")), &text)
}

fn read_timelines(dir: &Path) -> Result<Vec<UserTimeline>, Failure> {
    let accel_path = dir.join(ACCEL_FILE);
    let reports_path = dir.join(REPORTS_FILE);
    let accel = parse_accel_log(open(&accel_path)?).map_err(|e| io_failure(&accel_path, e))?;
    let reports = parse_report_log(open(&reports_path)?).map_err(|e| io_failure(&reports_path, e))?;
    if accel.malformed + reports.malformed > 0 {
        log::warn!("timelines store {} has malformed rows", dir.display());
    }
    Ok(build_timelines(accel.items, reports.items))
}

fn read_windows(dir: &Path) -> Result<Vec<LabeledWindow>, Failure> {
    let path = dir.join(WINDOWS_FILE);
    read_windows_jsonl(open(&path)?).map_err(|e| io_failure(&path, e))
}

// ---------------------------------------------------------------------------
// Commands

fn cmd_ingest(cfg: &RunConfig, accel: Option<&Path>, reports: Option<&Path>, out: Option<&Path>) -> CmdResult {
    let accel_path = accel.unwrap_or(&cfg.accel_path);
    let reports_path = reports.unwrap_or(&cfg.reports_path);
    let out = out.unwrap_or(&cfg.timelines_dir);
    let accel = parse_accel_log(open(accel_path)?).map_err(|e| io_failure(accel_path, e))?;
    let reports = parse_report_log(open(reports_path)?).map_err(|e| io_failure(reports_path, e))?;
    eprintln!("{}: {} samples, {} malformed rows", accel_path.display(), accel.items.len(), accel.malformed);
    eprintln!("{}: {} reports, {} malformed rows", reports_path.display(), reports.items.len(), reports.malformed);
    let timelines = build_timelines(accel.items, reports.items);
    create_dir(out)?;
    let accel_out = out.join(ACCEL_FILE);
    let reports_out = out.join(REPORTS_FILE);
    write_timelines(&timelines, create(&accel_out)?, create(&reports_out)?)
        .map_err(|e| io_failure(out, e))?;
    log::info!("wrote {} user timelines to {}", timelines.len(), out.display());
    write_manifest(out, "ingest", cfg)
}

fn cmd_preprocess(cfg: &RunConfig) -> CmdResult {
    let timelines = read_timelines(&cfg.timelines_dir)?;
    let built = build_dataset(&timelines);
    let dir = &cfg.dataset_dir;
    create_dir(dir)?;
    let path = dir.join(WINDOWS_FILE);
    write_windows_jsonl(&built.windows, create(&path)?).map_err(|e| io_failure(&path, e))?;
    let path = dir.join(OUTCOMES_FILE);
    write_outcomes_jsonl(&built.outcomes, create(&path)?).map_err(|e| io_failure(&path, e))?;
    let users: String = timelines.iter().map(|t| format!("{}\n", t.user_id)).collect();
    write_file(&dir.join(USERS_FILE), &users)?;
    log::info!(
        "{} reports -> {} windows in {}",
        built.outcomes.len(),
        built.windows.len(),
        dir.display()
    );
    write_manifest(dir, "preprocess", cfg)
}

fn cmd_stats(cfg: &RunConfig, dataset: Option<&Path>) -> CmdResult {
    let dir = dataset.unwrap_or(&cfg.dataset_dir);
    let path = dir.join(OUTCOMES_FILE);
    let outcomes = read_outcomes_jsonl(open(&path)?).map_err(|e| io_failure(&path, e))?;
    let users_path = dir.join(USERS_FILE);
    let mut users: BTreeSet<String> = match fs::read_to_string(&users_path) {
        Ok(text) => text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect(),
        Err(_) => BTreeSet::new(),
    };
    users.extend(outcomes.iter().map(|o| o.user_id.to_string()));
    let summary = summarize_outcomes(users.len(), &outcomes);
    print!("{}", summary.to_text_table());
    let csv_path = dir.join(SUMMARY_FILE);
    summary.write_csv(create(&csv_path)?).map_err(|e| io_failure(&csv_path, e))?;
    Ok(())
}

fn cmd_synth(cfg: &RunConfig) -> CmdResult {
    let corpus = generate_corpus(&cfg.synth_config(), &ProfileSet::default()).map_err(|e| Failure::usage(e.to_string()))?;
    let dir = &cfg.synth_dir;
    create_dir(dir)?;
    write_timelines(&corpus.timelines, create(&dir.join(ACCEL_FILE))?, create(&dir.join(REPORTS_FILE))?)
        .map_err(|e| io_failure(dir, e))?;
    let path = dir.join(TRUTH_FILE);
    corpus.write_truth_jsonl(create(&path)?).map_err(|e| io_failure(&path, e))?;
    log::info!("wrote {} users, {} reports to {}", corpus.timelines.len(), corpus.truth.len(), dir.display());
    write_manifest(dir, "synth", cfg)
}

fn model_name(key: &JobKey) -> String {
    format!("{}_{}_{}", key.activity.slug(), key.split_kind, key.mode)
}

/// Trains repetition 0 of every cell, with the same seeds `evaluate` uses.
fn cmd_train(cfg: &RunConfig) -> CmdResult {
    let windows = read_windows(&cfg.dataset_dir)?;
    let exp = cfg.experiment();
    exp.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let dir = &cfg.models_dir;
    create_dir(dir)?;
    let mut keys = Vec::new();
    for &activity in &exp.activities {
        for &split_kind in &exp.split_kinds {
            for &mode in &exp.modes {
                keys.push(JobKey { activity, split_kind, mode, repetition: 0 });
            }
        }
    }
    let results: Vec<(JobKey, Result<(usize, f64, MetricSet), String>)> = keys
        .par_iter()
        .map(|key| {
            let run = || -> Result<(usize, f64, MetricSet), String> {
                let parts = split(key.split_kind, &windows, &exp.fractions, exp.split_seed(key.split_kind, 0))
                    .map_err(|e| e.to_string())?;
                let seed = exp.job_seed(key);
                let task = make_task(&windows, &parts, key.activity, key.mode, seed).map_err(|e| e.to_string())?;
                let train_cfg = TrainConfig { seed: derive_seed(seed, &[0]), ..exp.train };
                let (state, history) = train_binary(&task, &exp.spec, &train_cfg).map_err(|e| e.to_string())?;
                let scores = predict_examples(&state, &task.test).map_err(|e| e.to_string())?;
                let metrics = MetricSet::from_scores(&scores, &task.test_labels()).map_err(|e| e.to_string())?;
                let name = model_name(key);
                let model = File::create(dir.join(format!("{name}.harm"))).map_err(|e| e.to_string())?;
                write_artifact(&state, BufWriter::new(model)).map_err(|e| e.to_string())?;
                let hist = File::create(dir.join(format!("{name}.history.csv"))).map_err(|e| e.to_string())?;
                history.write_csv(BufWriter::new(hist)).map_err(|e| e.to_string())?;
                Ok((history.selected_epoch + 1, history.val_auroc[history.selected_epoch], metrics))
            };
            (*key, run())
        })
        .collect();

    let mut index = String::from("model,activity,split_kind,mode,selected_epoch,val_auroc,test_auroc,test_f1_macro,test_accuracy\n");
    let mut ok = 0;
    for (key, result) in &results {
        match result {
            Ok((epoch, val, m)) => {
                ok += 1;
                index.push_str(&format!(
                    "{},{},{},{},{epoch},{val:.6},{:.6},{:.6},{:.6}\n",
                    model_name(key),
                    key.activity.slug(),
                    key.split_kind,
                    key.mode,
                    m.auroc,
                    m.f1_macro,
                    m.accuracy
                ));
            }
            Err(e) => log::warn!("{}: {e}", model_name(key)),
        }
    }
    write_file(&dir.join(MODEL_INDEX_FILE), &index)?;
    write_manifest(dir, "train", cfg)?;
    if ok == 0 {
        return Err(Failure { code: EXIT_ALL_FAILED, message: "every model failed to train".into() });
    }
    log::info!("trained {ok} of {} models into {}", results.len(), dir.display());
    Ok(())
}

fn write_report_csv(report: &EvalReport, dir: &Path) -> CmdResult {
    let path = dir.join(REPORT_CSV_FILE);
    write_csv(report, create(&path)?).map_err(|e| io_failure(&path, e))
}

fn cmd_evaluate(cfg: &RunConfig) -> CmdResult {
    let windows = read_windows(&cfg.dataset_dir)?;
    let exp = cfg.experiment();
    log::info!("evaluating {} windows: {} models in {} cells", windows.len(), exp.job_count(), exp.cell_count());
    let report = run_experiment(&windows, &exp).map_err(|e| Failure::usage(e.to_string()))?;
    let dir = &cfg.reports_dir;
    create_dir(dir)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&dir.join(EVAL_REPORT_FILE), &(json + "\n"))?;
    write_report_csv(&report, dir)?;
    write_manifest(dir, "evaluate", cfg)?;
    for cell in &report.cells {
        if let crate::evaluation::CellResult::Absent { reason } = &cell.result {
            log::warn!("{} {} {}: absent ({reason})", cell.key.activity, cell.key.split_kind, cell.key.mode);
        }
    }
    if report.absent_count() == report.cells.len() {
        return Err(Failure { code: EXIT_ALL_FAILED, message: "every report cell failed".into() });
    }
    Ok(())
}

fn cmd_report(cfg: &RunConfig) -> CmdResult {
    let dir = &cfg.reports_dir;
    let path = dir.join(EVAL_REPORT_FILE);
    let report: EvalReport = serde_json::from_reader(open(&path)?).map_err(|e| io_failure(&path, e))?;
    write_file(&dir.join(REPORT_MD_FILE), &render_markdown(&report))?;
    write_report_csv(&report, dir)?;
    write_manifest(dir, "report", cfg)
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> CmdResult {
    match &cli.command {
        Command::Ingest { accel, reports, out } => {
            cmd_ingest(cfg, accel.as_deref(), reports.as_deref(), out.as_deref())
        }
        Command::Stats { dataset } => cmd_stats(cfg, dataset.as_deref()),
        Command::Preprocess => cmd_preprocess(cfg),
        Command::Synth => cmd_synth(cfg),
        Command::Train => cmd_train(cfg),
        Command::Evaluate => cmd_evaluate(cfg),
        Command::Report => cmd_report(cfg),
    }
}

/// Runs one invocation and returns its exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    log::set_max_level(level);

    let result = load_config(&cli).and_then(|cfg| {
        let jobs = cli.jobs.unwrap_or(0);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Failure::usage(format!("--jobs: {e}")))?;
        pool.install(|| dispatch(&cli, &cfg))
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("har {}: {f}", cli.command.name());
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_round_trip() {
        let base = Path::new("/tmp/x");
        let mut cfg = RunConfig::defaults(base);
        cfg.activities = vec![ActivityClass::Sports, ActivityClass::Sleeping];
        cfg.modes = vec![TaskMode::Imbalanced];
        cfg.train.adam.learning_rate = 3e-4;
        cfg.seed = 99;
        cfg.synth.class_probs = [0.3, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
        cfg.network = NetworkSpec::from_compact("conv1d:3:4:9:4, relu, gap, dense:4:1, sigmoid", 3, 600).unwrap();
        let back = parse_config(&cfg.to_text(), Path::new("/elsewhere")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn field_level_diagnostics() {
        let text = "# comment\nrepetitions = 0\nepochs = ten\nbogus = 1\nseed = 1\nseed = 2\nno equals sign\n";
        let errors = parse_config(text, Path::new("")).unwrap_err();
        let shown: Vec<String> = errors.iter().map(ToString::to_string).collect();
        assert_eq!(
            shown,
            vec![
                "line 2: repetitions: expected a positive integer, got `0`",
                "line 3: epochs: expected a positive integer, got `ten`",
                "line 4: bogus: unknown key",
                "line 6: seed: set more than once",
                "line 7: no equals sign: expected `key = value`",
            ]
        );
    }

    #[test]
    fn cross_field_validation() {
        let errors = parse_config("train_fraction = 0.9\nbeta1 = 1.0\n", Path::new("")).unwrap_err();
        assert_eq!(errors.len(), 2);
        assert!(errors.iter().all(|e| e.line.is_none()));
    }

    #[test]
    fn list_values() {
        let cfg = parse_config("activities = all\nsplit_kinds = hybrid\nmodes = balanced, imbalanced\n", Path::new("")).unwrap();
        assert_eq!(cfg.activities.len(), 8);
        assert_eq!(cfg.split_kinds, vec![SplitKind::Hybrid]);
        let err = parse_config("modes = balanced, balanced\n", Path::new("")).unwrap_err();
        assert_eq!(err[0].key, "modes");
        let err = parse_config("activities = Sleeping, Napping\n", Path::new("")).unwrap_err();
        assert!(err[0].message.contains("Napping"));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["har", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["har", "stats", "/nonexistent/dataset"]), EXIT_USAGE);
    }
}
