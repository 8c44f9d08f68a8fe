//! Seeded synthetic cohorts for tests, benchmarks and the bundled toy fixture.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::features::{hrv_column, FeatureMatrix, AGE_NORMALIZED_SUFFIX, METRICS};
use crate::ingest::{write_clinical_table, Cohort, SignalRef, SubjectRecord};
use crate::signal::SleepStage;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Shape of a latent-factor feature matrix: `x_j = s + feature_noise_sd * e_j`
/// for the informative columns, pure noise elsewhere, and
/// `y = intercept + scale * (s + target_noise_sd * e)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_subjects: usize,
    pub n_informative: usize,
    pub n_noise: usize,
    pub feature_noise_sd: f64,
    pub target_noise_sd: f64,
    pub intercept: f64,
    pub scale: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_subjects: 43,
            n_informative: 5,
            n_noise: 15,
            feature_noise_sd: 0.5,
            // var(s) = var(e) gives an oracle R^2 of 0.5
            target_noise_sd: 1.0,
            intercept: 1.7,
            scale: 0.1,
        }
    }
}

/// Names for informative columns, drawn from the stage-HRV namespace.
pub fn informative_names(n: usize) -> Vec<String> {
    let mut names: Vec<String> = SleepStage::ALL
        .iter()
        .map(|s| format!("{}{AGE_NORMALIZED_SUFFIX}", hrv_column(*s, "mean_rr")))
        .collect();
    for metric in &METRICS[1..] {
        for stage in SleepStage::ALL {
            names.push(hrv_column(stage, metric));
        }
    }
    names.truncate(n);
    names
}

/// Informative columns carry stage-HRV names; noise columns carry clinical-style
/// names so the ablation pools separate them.
pub fn synthetic_matrix(spec: &SyntheticSpec, seed: u64) -> FeatureMatrix {
    assert!(spec.n_informative <= 15, "at most 15 informative columns");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n_subjects;
    let s: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let mut names = informative_names(spec.n_informative);
    let mut columns: Vec<Vec<Option<f64>>> = (0..spec.n_informative)
        .map(|_| {
            s.iter()
                .map(|v| Some(v + spec.feature_noise_sd * normal(&mut rng)))
                .collect()
        })
        .collect();
    for j in 0..spec.n_noise {
        names.push(format!("clinical_{:02}", j + 1));
        columns.push((0..n).map(|_| Some(normal(&mut rng))).collect());
    }
    let target = s
        .iter()
        .map(|v| spec.intercept + spec.scale * (v + spec.target_noise_sd * normal(&mut rng)))
        .collect();
    let ids = (0..n).map(|i| format!("S{:03}", i + 1)).collect();
    FeatureMatrix::new(ids, names, columns, target).expect("synthetic matrix is well formed")
}

/// Raw synthetic cohort written as a clinical table plus per-subject signal files.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    pub n_subjects: usize,
    /// The last `n_ecg` subjects get raw ECG with a stage file instead of RR.
    pub n_ecg: usize,
    /// Seconds of ECG per stage.
    pub ecg_stage_seconds: f64,
    pub fs: f64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_subjects: 43,
            n_ecg: 2,
            ecg_stage_seconds: 45.0,
            fs: 250.0,
        }
    }
}

/// Stage-block layout of a synthetic night: (stage, beats); `None` is wake.
const NIGHT: [(Option<SleepStage>, usize); 8] = [
    (Some(SleepStage::Rs), 120),
    (Some(SleepStage::Ds), 150),
    (Some(SleepStage::Rs), 80),
    (Some(SleepStage::Rem), 120),
    (None, 40),
    (Some(SleepStage::Rs), 100),
    (Some(SleepStage::Ds), 120),
    (Some(SleepStage::Rem), 150),
];

fn stage_offset(stage: Option<SleepStage>) -> (f64, f64) {
    // (mean offset ms, beat-to-beat sd ms)
    match stage {
        Some(SleepStage::Ds) => (40.0, 15.0),
        Some(SleepStage::Rem) => (-20.0, 32.0),
        Some(SleepStage::Rs) => (0.0, 24.0),
        None => (-90.0, 40.0),
    }
}

struct Latent {
    age: f64,
    /// Autonomic factor shared by glucose, blood pressure and HRV.
    u: f64,
    /// Age-normalized mean RR level, ms.
    level: f64,
}

impl Latent {
    fn raw_scale(&self) -> f64 {
        (self.age / 65.0 + 0.1) / 0.9
    }
}

/// AR(1) beat-to-beat intervals around a stage mean.
fn stage_block(rng: &mut ChaCha8Rng, latent: &Latent, stage: Option<SleepStage>, beats: usize) -> Vec<f64> {
    let (offset, sd) = stage_offset(stage);
    let mean = (latent.level + offset) * latent.raw_scale();
    let mut ar = 0.0;
    (0..beats)
        .map(|_| {
            ar = 0.7 * ar + sd * normal(rng);
            (mean + ar).max(300.0)
        })
        .collect()
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn rr_file_text(rng: &mut ChaCha8Rng, latent: &Latent) -> String {
    let mut out = String::from("rr_ms,stage\n");
    let mut rows: Vec<(f64, Option<SleepStage>)> = Vec::new();
    for (stage, beats) in NIGHT {
        rows.extend(stage_block(rng, latent, stage, beats).into_iter().map(|rr| (rr, stage)));
    }
    // two ectopic beats: one premature, one missed detection
    let n = rows.len();
    let a = rng.random_range(10..n / 2);
    let b = rng.random_range(n / 2..n - 10);
    rows[a].0 *= 0.5;
    rows[b].0 *= 2.1;
    for (rr, stage) in rows {
        let token = stage.map(|s| s.token()).unwrap_or("-");
        out.push_str(&format!("{:.1},{token}\n", rr));
    }
    out
}

fn gaussian(t: f64, centre: f64, width: f64) -> f64 {
    (-0.5 * ((t - centre) / width).powi(2)).exp()
}

/// PQRST complex in mV at offset `dt` seconds from the R peak.
pub fn beat_waveform(dt: f64) -> f64 {
    0.12 * gaussian(dt, -0.20, 0.025) - 0.10 * gaussian(dt, -0.03, 0.008)
        + 1.20 * gaussian(dt, 0.0, 0.010)
        - 0.25 * gaussian(dt, 0.03, 0.010)
        + 0.30 * gaussian(dt, 0.25, 0.040)
}

/// ECG samples with R peaks at `r_times` (s), plus baseline wander and noise.
pub fn synthesize_ecg(rng: &mut ChaCha8Rng, r_times: &[f64], duration: f64, fs: f64, noise_mv: f64) -> Vec<f64> {
    let n = (duration * fs).round() as usize;
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            0.05 * (2.0 * std::f64::consts::PI * 0.3 * t).sin() + noise_mv * normal(rng)
        })
        .collect();
    for &r in r_times {
        let lo = ((r - 0.4) * fs).floor().max(0.0) as usize;
        let hi = (((r + 0.5) * fs).ceil() as usize).min(n);
        for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
            *v += beat_waveform(i as f64 / fs - r);
        }
    }
    x
}

fn ecg_files(rng: &mut ChaCha8Rng, latent: &Latent, spec: &CohortSpec) -> (String, String) {
    let order = [SleepStage::Rs, SleepStage::Ds, SleepStage::Rem];
    let duration = spec.ecg_stage_seconds * order.len() as f64;
    let mut stages = String::from("start_s,end_s,stage\n");
    let mut r_times = Vec::new();
    let mut t = 0.6;
    for (k, stage) in order.iter().enumerate() {
        let start = k as f64 * spec.ecg_stage_seconds;
        let end = start + spec.ecg_stage_seconds;
        stages.push_str(&format!("{start},{end},{}\n", stage.token()));
        while t < end {
            let rr = stage_block(rng, latent, Some(*stage), 1)[0];
            r_times.push(t);
            t += rr / 1000.0;
        }
    }
    let r_times: Vec<f64> = r_times.into_iter().filter(|&r| r < duration - 0.5).collect();
    let samples = synthesize_ecg(rng, &r_times, duration, spec.fs, 0.02);
    let mut ecg = String::with_capacity(samples.len() * 8);
    for v in samples {
        ecg.push_str(&format!("{:.4}\n", v));
    }
    (ecg, stages)
}

/// Writes `clinical.csv`, `rr/*.csv`, `ecg/*.txt` and `stages/*.csv` under `dir`.
///
/// Glucose, blood pressure and the age-normalized mean RR share a latent factor;
/// raw mean RR additionally scales with age.
pub fn write_synthetic_cohort(dir: impl AsRef<Path>, spec: &CohortSpec, seed: u64) -> Result<Cohort> {
    let dir = dir.as_ref();
    if spec.n_ecg > spec.n_subjects || spec.n_subjects < 2 {
        return Err(Error::InvalidParameter("synthetic cohort needs >= 2 subjects".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 1.0).expect("unit normal");
    let mut subjects = Vec::with_capacity(spec.n_subjects);
    for i in 0..spec.n_subjects {
        let id = format!("S{:03}", i + 1);
        let age = rng.random_range(22..=78) as f64;
        let u = normal(&mut rng);
        let latent = Latent {
            age,
            u,
            level: 1000.0 - 60.0 * u + 25.0 * jitter.sample(&mut rng),
        };
        let log_g = 5.4f64.ln() + 0.09 * latent.u + 0.003 * (age - 50.0) + 0.08 * normal(&mut rng);

        let mut clinical = IndexMap::new();
        clinical.insert("dbp".to_string(), Some(round_to(76.0 + 3.0 * u + 7.0 * normal(&mut rng), 0)));
        clinical.insert(
            "sbp".to_string(),
            Some(round_to(122.0 + 0.4 * (age - 50.0) + 12.0 * normal(&mut rng), 0)),
        );
        let bmi = round_to(25.0 + 3.5 * normal(&mut rng), 1);
        clinical.insert("bmi".to_string(), (i % 11 != 4).then_some(bmi));
        let psqi = (6.0 + 3.0 * normal(&mut rng)).round().clamp(0.0, 21.0);
        clinical.insert("psqi".to_string(), Some(psqi));

        let signal = if i >= spec.n_subjects - spec.n_ecg {
            let (ecg, stages) = ecg_files(&mut rng, &latent, spec);
            let ecg_rel = PathBuf::from(format!("ecg/{id}.txt"));
            let stages_rel = PathBuf::from(format!("stages/{id}.csv"));
            write(&dir.join(&ecg_rel), &ecg)?;
            write(&dir.join(&stages_rel), &stages)?;
            SignalRef {
                rr_file: None,
                ecg_file: Some(ecg_rel),
                stages_file: Some(stages_rel),
            }
        } else {
            let rel = PathBuf::from(format!("rr/{id}.csv"));
            write(&dir.join(&rel), &rr_file_text(&mut rng, &latent))?;
            SignalRef {
                rr_file: Some(rel),
                ..SignalRef::default()
            }
        };
        subjects.push(SubjectRecord {
            subject_id: id,
            age,
            glucose: round_to(log_g.exp(), 2),
            clinical,
            signal,
        });
    }
    let cohort = Cohort::new(subjects)?;
    write_clinical_table(&cohort, dir.join("clinical.csv"))?;
    Ok(cohort)
}
