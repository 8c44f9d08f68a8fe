//! ECG and RR-interval processing.
//!
//! The chain runs raw ECG through amplitude validation and R-peak detection,
//! converts peaks to RR intervals, drops statistical outliers, and splits the
//! cleaned series by sleep stage.

mod artifacts;
mod qrs;
mod stages;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use artifacts::{remove_artifacts, remove_artifacts_single_pass, DEFAULT_ARTIFACT_WINDOW};
pub use qrs::{detect_r_peaks, detect_r_peaks_with, QrsParams};
pub use stages::{segment_by_stage, StageMap};

/// Physiological ECG amplitude limit in mV.
pub const AMPLITUDE_LIMIT_MV: f64 = 5.0;

/// Sleep stages consumed from annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SleepStage {
    /// Deep (slow-wave) sleep.
    Ds,
    Rem,
    /// Transitional "rapid sleep" category.
    Rs,
}

impl SleepStage {
    pub const ALL: [SleepStage; 3] = [SleepStage::Ds, SleepStage::Rem, SleepStage::Rs];

    /// File token: `DS`, `REM` or `RS`.
    pub fn token(self) -> &'static str {
        match self {
            SleepStage::Ds => "DS",
            SleepStage::Rem => "REM",
            SleepStage::Rs => "RS",
        }
    }

    /// Lower-case prefix used in feature column names.
    pub fn column_prefix(self) -> &'static str {
        match self {
            SleepStage::Ds => "ds",
            SleepStage::Rem => "rem",
            SleepStage::Rs => "rs",
        }
    }
}

impl fmt::Display for SleepStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for SleepStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DS" => Ok(SleepStage::Ds),
            "REM" => Ok(SleepStage::Rem),
            "RS" => Ok(SleepStage::Rs),
            other => Err(Error::InvalidAnnotation(format!(
                "unknown stage token `{other}` (expected DS, REM or RS)"
            ))),
        }
    }
}

/// Uniformly sampled single-lead ECG in mV.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    samples: Vec<f64>,
    fs: f64,
}

impl EcgRecord {
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::InvalidSamplingRate(fs));
        }
        if samples.is_empty() {
            return Err(Error::Empty("ECG record has no samples".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("ECG samples".into()));
        }
        Ok(Self { samples, fs })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub max_abs_mv: f64,
    pub limit_mv: f64,
    pub passed: bool,
}

/// Checks the record stays inside the +/-5 mV physiological range.
pub fn validate_amplitude(ecg: &EcgRecord) -> Result<ValidationReport> {
    let max_abs = ecg
        .samples
        .iter()
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s.abs(), |m| m.max(s.abs()))))
        .ok_or_else(|| Error::Empty("ECG record has no samples".into()))?;
    Ok(ValidationReport {
        max_abs_mv: max_abs,
        limit_mv: AMPLITUDE_LIMIT_MV,
        passed: max_abs <= AMPLITUDE_LIMIT_MV,
    })
}

/// Sample indices of detected R-peaks, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PeakList {
    indices: Vec<usize>,
}

impl PeakList {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "peak indices must be strictly increasing".into(),
            ));
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Beat-to-beat intervals in ms with onset times in seconds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RrSeries {
    intervals: Vec<f64>,
    onsets: Vec<f64>,
    stages: Option<Vec<Option<SleepStage>>>,
}

impl RrSeries {
    pub fn new(
        intervals: Vec<f64>,
        onsets: Vec<f64>,
        stages: Option<Vec<Option<SleepStage>>>,
    ) -> Result<Self> {
        if intervals.len() != onsets.len() {
            return Err(Error::LengthMismatch {
                left: intervals.len(),
                right: onsets.len(),
            });
        }
        if let Some(labels) = &stages {
            if labels.len() != intervals.len() {
                return Err(Error::LengthMismatch {
                    left: intervals.len(),
                    right: labels.len(),
                });
            }
        }
        if let Some((index, &value)) = intervals
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::NonPositiveRr { index, value });
        }
        if onsets.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("RR onsets".into()));
        }
        if onsets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "RR onsets must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            intervals,
            onsets,
            stages,
        })
    }

    /// Builds a series whose onsets are the running sum of the intervals, starting at 0 s.
    pub fn from_intervals(
        intervals: Vec<f64>,
        stages: Option<Vec<Option<SleepStage>>>,
    ) -> Result<Self> {
        let mut onsets = Vec::with_capacity(intervals.len());
        let mut t_ms = 0.0;
        for rr in &intervals {
            onsets.push(t_ms / 1000.0);
            t_ms += rr;
        }
        Self::new(intervals, onsets, stages)
    }

    pub fn intervals(&self) -> &[f64] {
        &self.intervals
    }

    pub fn onsets(&self) -> &[f64] {
        &self.onsets
    }

    pub fn stages(&self) -> Option<&[Option<SleepStage>]> {
        self.stages.as_deref()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Keeps the entries whose index satisfies `keep`, preserving order.
    pub(crate) fn retain_indices(&self, keep: impl Fn(usize) -> bool) -> RrSeries {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        RrSeries {
            intervals: idx.iter().map(|&i| self.intervals[i]).collect(),
            onsets: idx.iter().map(|&i| self.onsets[i]).collect(),
            stages: self
                .stages
                .as_ref()
                .map(|s| idx.iter().map(|&i| s[i]).collect()),
        }
    }
}

/// Converts R-peak sample indices into RR intervals (ms) with onsets at each leading peak.
pub fn peaks_to_rr(peaks: &PeakList, fs: f64) -> Result<RrSeries> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::InvalidSamplingRate(fs));
    }
    if peaks.len() < 2 {
        return Err(Error::TooFew {
            what: "R-peaks",
            needed: 2,
            got: peaks.len(),
        });
    }
    let idx = peaks.indices();
    let intervals = idx
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / fs * 1000.0)
        .collect();
    let onsets = idx[..idx.len() - 1].iter().map(|&i| i as f64 / fs).collect();
    RrSeries::new(intervals, onsets, None)
}
