//! Synthetic multi-user accelerometer corpora with class-conditional signal
//! laws, used as a ground-truth oracle for the pipeline.
//!
//! Every class is described by a [`ClassProfile`]. A separability scalar σ
//! interpolates each class between a shared base profile (σ = 0, where labels
//! carry no information) and its own profile (σ = 1).

use std::f64::consts::TAU;
use std::io::Write;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{AccelSample, ActivityClass, LabeledWindow, SelfReport, UserId, GRID_STEP_MS};
use crate::ingest::UserTimeline;
use crate::seeds::derive_seed;

pub const GRAVITY: f64 = 9.80665;
/// Harmonics are kept below the Nyquist rate of the 300 ms grid.
pub const MAX_FREQUENCY_HZ: f64 = 1.6;
/// Samples synthesized before each fill interval (240 s at 300 ms).
pub const SAMPLES_BEFORE_FILL: usize = 800;
pub const FIRST_REPORT_MS: i64 = 1_600_000_000_000;
pub const REPORT_SPACING_MS: i64 = 3_600_000;
/// Jitter is clamped so consecutive samples never swap order.
pub const MAX_JITTER_MS: f64 = 149.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    /// m/s².
    pub amplitude: f64,
    pub frequency_hz: f64,
    /// Per-axis phase in radians.
    pub phase: [f64; 3],
}

/// Generative parameters of one activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    /// Direction of gravity in the device frame; normalized on use.
    pub gravity: [f64; 3],
    /// White-noise std, m/s².
    pub noise_std: f64,
    pub harmonics: Vec<Harmonic>,
    /// Per-step std of a per-axis random walk, m/s².
    pub drift_std: f64,
    /// Std of the per-user additive tilt of the gravity direction.
    pub user_tilt_std: f64,
    /// Relative std of the per-user noise and amplitude scale.
    pub user_scale_std: f64,
    /// Std of the per-user frequency offset, Hz.
    pub user_frequency_std: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("class probabilities must be 8 non-negative values summing to 1, got {0:?}")]
    Probabilities(Vec<f64>),
    #[error("{field} must be in [0, 1], got {value}")]
    Rate { field: &'static str, value: f64 },
    #[error("jitter std must be finite and >= 0, got {0}")]
    Jitter(f64),
    #[error("profile for {class}: {detail}")]
    Profile { class: String, detail: String },
}

impl ClassProfile {
    fn check(&self, class: &str) -> Result<(), SynthError> {
        let err = |detail: String| Err(SynthError::Profile { class: class.to_string(), detail });
        if norm(self.gravity) == 0.0 || self.gravity.iter().any(|g| !g.is_finite()) {
            return err("gravity direction must be a finite non-zero vector".into());
        }
        let stds = [self.noise_std, self.drift_std, self.user_tilt_std, self.user_scale_std, self.user_frequency_std];
        if stds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return err("standard deviations must be finite and >= 0".into());
        }
        for h in &self.harmonics {
            if !(h.amplitude.is_finite() && h.amplitude >= 0.0) {
                return err(format!("harmonic amplitude {} must be >= 0", h.amplitude));
            }
            if !(h.frequency_hz >= 0.0 && h.frequency_hz <= MAX_FREQUENCY_HZ) {
                return err(format!("harmonic frequency {} Hz outside [0, {MAX_FREQUENCY_HZ}]", h.frequency_hz));
            }
        }
        Ok(())
    }

    fn lerp(&self, other: &ClassProfile, s: f64) -> ClassProfile {
        let l = |a: f64, b: f64| a + (b - a) * s;
        let n = self.harmonics.len().max(other.harmonics.len());
        // A missing harmonic behaves as a zero-amplitude copy of its counterpart.
        let silent = |h: &Harmonic| Harmonic { amplitude: 0.0, ..*h };
        let harmonics = (0..n)
            .map(|i| {
                let a = self.harmonics.get(i).copied().unwrap_or_else(|| silent(&other.harmonics[i]));
                let b = other.harmonics.get(i).copied().unwrap_or_else(|| silent(&a));
                Harmonic {
                    amplitude: l(a.amplitude, b.amplitude),
                    frequency_hz: l(a.frequency_hz, b.frequency_hz),
                    phase: std::array::from_fn(|k| l(a.phase[k], b.phase[k])),
                }
            })
            .collect();
        let (ga, gb) = (unit(self.gravity), unit(other.gravity));
        ClassProfile {
            gravity: std::array::from_fn(|k| l(ga[k], gb[k])),
            noise_std: l(self.noise_std, other.noise_std),
            harmonics,
            drift_std: l(self.drift_std, other.drift_std),
            user_tilt_std: l(self.user_tilt_std, other.user_tilt_std),
            user_scale_std: l(self.user_scale_std, other.user_scale_std),
            user_frequency_std: l(self.user_frequency_std, other.user_frequency_std),
        }
    }
}

fn norm(v: [f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = norm(v);
    v.map(|x| x / n)
}

/// A shared base profile and one profile per class, indexed by class code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    pub base: ClassProfile,
    pub classes: [ClassProfile; 8],
}

fn harmonic(amplitude: f64, frequency_hz: f64, phase: [f64; 3]) -> Harmonic {
    Harmonic { amplitude, frequency_hz, phase }
}

fn profile(gravity: [f64; 3], noise_std: f64, harmonics: Vec<Harmonic>) -> ClassProfile {
    ClassProfile {
        gravity,
        noise_std,
        harmonics,
        drift_std: 0.002,
        user_tilt_std: 0.05,
        user_scale_std: 0.1,
        user_frequency_std: 0.03,
    }
}

impl Default for ProfileSet {
    /// Sleeping is a still phone lying flat, sports a strong 1.4 Hz swing,
    /// shopping a walking-pace 0.9 Hz swing; the rest differ mainly in
    /// orientation and noise level.
    fn default() -> Self {
        let p = [0.0, 1.3, 2.1];
        ProfileSet {
            base: profile([0.0, 0.6, 0.8], 0.3, vec![harmonic(0.3, 0.5, p)]),
            classes: [
                profile([0.0, 0.0, 1.0], 0.02, vec![harmonic(0.0, 0.2, p)]),
                profile([0.7, 0.0, 0.7], 0.25, vec![harmonic(0.2, 0.3, p)]),
                profile([0.0, 0.7, 0.7], 0.1, vec![harmonic(0.1, 0.2, p)]),
                profile([-0.7, 0.0, 0.7], 0.08, vec![harmonic(0.05, 0.25, p)]),
                profile([0.0, -0.7, 0.7], 0.3, vec![harmonic(0.4, 0.6, p)]),
                profile([1.0, 0.0, 0.1], 0.05, vec![harmonic(0.05, 0.15, p)]),
                profile([0.0, 1.0, 0.1], 1.5, vec![harmonic(3.0, 1.4, p)]),
                profile([-0.5, 0.5, 0.7], 0.6, vec![harmonic(1.5, 0.9, p)]),
            ],
        }
    }
}

impl ProfileSet {
    /// The effective profiles at separability `sigma`: every class moved
    /// `sigma` of the way from the base to its own profile.
    pub fn at(&self, sigma: f64) -> [ClassProfile; 8] {
        std::array::from_fn(|c| self.base.lerp(&self.classes[c], sigma))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.base.check("base")?;
        for (c, p) in ActivityClass::ALL.iter().zip(&self.classes) {
            p.check(c.slug())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub users: usize,
    pub reports_per_user: usize,
    /// Report probability per class, indexed by class code.
    pub class_probs: [f64; 8],
    /// σ in [0, 1].
    pub separability: f64,
    /// Probability that any one sample is dropped.
    pub missing_rate: f64,
    pub jitter_std_ms: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 20,
            reports_per_user: 20,
            class_probs: [0.125; 8],
            separability: 1.0,
            missing_rate: 0.0,
            jitter_std_ms: 20.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let p = &self.class_probs;
        if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(SynthError::Probabilities(p.to_vec()));
        }
        for (field, value) in [("separability", self.separability), ("missing_rate", self.missing_rate)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SynthError::Rate { field, value });
            }
        }
        if !(self.jitter_std_ms.is_finite() && self.jitter_std_ms >= 0.0) {
            return Err(SynthError::Jitter(self.jitter_std_ms));
        }
        Ok(())
    }
}

/// Ground truth for one generated report: the drawn class and the effective
/// parameters after per-user perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub user_id: UserId,
    pub report_id: String,
    pub class: ActivityClass,
    pub raw_activity: String,
    pub gravity: [f64; 3],
    pub noise_std: f64,
    pub harmonics: Vec<Harmonic>,
    pub drift_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub timelines: Vec<UserTimeline>,
    pub truth: Vec<TruthRecord>,
}

impl SynthCorpus {
    /// Number of reports drawn for each class, indexed by class code.
    pub fn class_counts(&self) -> [usize; 8] {
        let mut counts = [0; 8];
        for t in &self.truth {
            counts[t.class.code() as usize] += 1;
        }
        counts
    }

    pub fn write_truth_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for t in &self.truth {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

pub fn user_name(user: usize) -> String {
    format!("user{user:04}")
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// A user's standard-normal perturbation draws, scaled by each class's stds.
struct UserDraws {
    shared: [f64; 6],
    per_class: [[f64; 6]; 8],
}

impl UserDraws {
    fn new(seed: u64, user: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0, user as u64]));
        let mut draw = || std::array::from_fn(|_| normal(&mut rng));
        let shared = draw();
        let per_class = std::array::from_fn(|_| draw());
        UserDraws { shared, per_class }
    }

    /// At σ = 0 every class of a user shares the same perturbation, so class
    /// laws stay identical.
    fn z(&self, class: usize, sigma: f64) -> [f64; 6] {
        std::array::from_fn(|k| self.shared[k] + sigma * self.per_class[class][k])
    }

    fn apply(&self, p: &ClassProfile, class: usize, sigma: f64) -> ClassProfile {
        let z = self.z(class, sigma);
        let g = unit(p.gravity);
        let gravity = unit(std::array::from_fn(|k| g[k] + p.user_tilt_std * z[k]));
        let noise_scale = (1.0 + p.user_scale_std * z[3]).max(0.0);
        let amp_scale = (1.0 + p.user_scale_std * z[4]).max(0.0);
        let harmonics = p
            .harmonics
            .iter()
            .map(|h| Harmonic {
                amplitude: h.amplitude * amp_scale,
                frequency_hz: (h.frequency_hz + p.user_frequency_std * z[5]).clamp(0.0, MAX_FREQUENCY_HZ),
                phase: h.phase,
            })
            .collect();
        ClassProfile { gravity, noise_std: p.noise_std * noise_scale, harmonics, ..p.clone() }
    }
}

fn draw_class(rng: &mut ChaCha8Rng, probs: &[f64; 8]) -> ActivityClass {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return ActivityClass::ALL[c];
        }
    }
    // Rounding left `u` above the total; take the last class with mass.
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    ActivityClass::ALL[last]
}

fn push_sample(samples: &mut Vec<AccelSample>, user: &UserId, t: i64, v: [f64; 3]) {
    samples.push(AccelSample::new(user.clone(), t, v[0], v[1], v[2]).expect("synthetic values are finite"));
}

fn generate_user(cfg: &SynthConfig, profiles: &[ClassProfile; 8], user: usize) -> (UserTimeline, Vec<TruthRecord>) {
    let user_id = UserId::new(user_name(user));
    let draws = UserDraws::new(cfg.seed, user);
    let mut samples = Vec::new();
    let mut reports = Vec::with_capacity(cfg.reports_per_user);
    let mut truth = Vec::with_capacity(cfg.reports_per_user);

    for r in 0..cfg.reports_per_user {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1, user as u64, r as u64]));
        let class = draw_class(&mut rng, &cfg.class_probs);
        let raw_activity = *class.raw_labels().choose(&mut rng).expect("every class has a raw label");
        let p = draws.apply(&profiles[class.code() as usize], class.code() as usize, cfg.separability);

        let fill_start = FIRST_REPORT_MS + r as i64 * REPORT_SPACING_MS;
        let fill_end = fill_start + rng.random_range(10_000..=60_000);
        let report_id = format!("{}-r{r:04}", user_id);
        let phase_offset = rng.random::<f64>() * TAU;
        let mut drift = [0.0; 3];

        let first = fill_start - SAMPLES_BEFORE_FILL as i64 * GRID_STEP_MS;
        let mut i = 0i64;
        loop {
            let nominal = first + i * GRID_STEP_MS;
            if nominal > fill_end {
                break;
            }
            let jitter = (normal(&mut rng) * cfg.jitter_std_ms).clamp(-MAX_JITTER_MS, MAX_JITTER_MS);
            let t = nominal + jitter.round() as i64;
            let secs = (t - first) as f64 / 1000.0;
            let mut v = [0.0; 3];
            for (k, out) in v.iter_mut().enumerate() {
                drift[k] += p.drift_std * normal(&mut rng);
                let wave: f64 = p
                    .harmonics
                    .iter()
                    .map(|h| h.amplitude * (TAU * h.frequency_hz * secs + h.phase[k] + phase_offset).sin())
                    .sum();
                *out = GRAVITY * p.gravity[k] + wave + drift[k] + p.noise_std * normal(&mut rng);
            }
            if nominal >= fill_start {
                // The phone is being handled while the diary is filled in.
                for (k, out) in v.iter_mut().enumerate() {
                    *out += 2.0 * normal(&mut rng) + k as f64;
                }
            }
            let dropped = rng.random::<f64>() < cfg.missing_rate;
            if !dropped {
                push_sample(&mut samples, &user_id, t, v);
            }
            i += 1;
        }

        reports.push(
            SelfReport::new(user_id.clone(), report_id.clone(), fill_start, fill_end, raw_activity, None)
                .expect("synthetic report is valid"),
        );
        truth.push(TruthRecord {
            user_id: user_id.clone(),
            report_id,
            class,
            raw_activity: raw_activity.to_string(),
            gravity: p.gravity,
            noise_std: p.noise_std,
            harmonics: p.harmonics,
            drift_std: p.drift_std,
        });
    }
    (UserTimeline { user_id, samples, reports }, truth)
}

/// Generates one corpus. Users are generated in parallel and merged in user
/// order; the output depends only on `cfg` and `profiles`.
pub fn generate_corpus(cfg: &SynthConfig, profiles: &ProfileSet) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    profiles.validate()?;
    let effective = profiles.at(cfg.separability);
    let per_user: Vec<(UserTimeline, Vec<TruthRecord>)> =
        (0..cfg.users).into_par_iter().map(|u| generate_user(cfg, &effective, u)).collect();
    let mut timelines = Vec::with_capacity(per_user.len());
    let mut truth = Vec::new();
    for (t, tr) in per_user {
        timelines.push(t);
        truth.extend(tr);
    }
    Ok(SynthCorpus { timelines, truth })
}

/// A corpus at `sigma` and its σ = 0 counterpart from the same seed.
pub fn separability_pair(
    cfg: &SynthConfig,
    profiles: &ProfileSet,
    sigma: f64,
) -> Result<(SynthCorpus, SynthCorpus), SynthError> {
    let signal = generate_corpus(&SynthConfig { separability: sigma, ..cfg.clone() }, profiles)?;
    let null = generate_corpus(&SynthConfig { separability: 0.0, ..cfg.clone() }, profiles)?;
    Ok((signal, null))
}

/// A seeded permutation of `0..n`.
pub fn label_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

/// Window `i` receives the label of window `perm[i]`; data is untouched.
pub fn apply_label_permutation(windows: &[LabeledWindow], perm: &[usize]) -> Vec<LabeledWindow> {
    assert_eq!(windows.len(), perm.len(), "permutation length");
    windows
        .iter()
        .zip(perm)
        .map(|(w, &j)| LabeledWindow { label: windows[j].label, ..w.clone() })
        .collect()
}

/// Randomly reassigns labels among windows, preserving the label multiset.
pub fn shuffle_labels(windows: &[LabeledWindow], seed: u64) -> Vec<LabeledWindow> {
    apply_label_permutation(windows, &label_permutation(windows.len(), seed))
}
