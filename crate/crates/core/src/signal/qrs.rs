//! Adaptive-threshold QRS detection in the Pan–Tompkins style.
//!
//! Filters are causal and start from rest, so leading silence only delays the
//! output: prepending zeros shifts every detection by exactly the prefix length.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{validate_amplitude, EcgRecord, PeakList};
use crate::error::{Error, Result};

const MIN_FS: f64 = 100.0;

/// Detector constants. Defaults are the classical published values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QrsParams {
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    /// Moving-window integration length.
    pub integration_s: f64,
    pub refractory_s: f64,
    /// Initial threshold learning span.
    pub learning_s: f64,
    /// Search-back triggers when no beat is found within this multiple of the RR average.
    pub searchback_factor: f64,
    /// Minimum record length.
    pub min_duration_s: f64,
}

impl Default for QrsParams {
    fn default() -> Self {
        Self {
            band_low_hz: 5.0,
            band_high_hz: 15.0,
            integration_s: 0.150,
            refractory_s: 0.200,
            learning_s: 2.0,
            searchback_factor: 1.66,
            min_duration_s: 2.0,
        }
    }
}

pub fn detect_r_peaks(ecg: &EcgRecord) -> Result<PeakList> {
    detect_r_peaks_with(ecg, &QrsParams::default())
}

pub fn detect_r_peaks_with(ecg: &EcgRecord, params: &QrsParams) -> Result<PeakList> {
    let fs = ecg.fs();
    if fs < MIN_FS {
        return Err(Error::SamplingRateTooLow(fs));
    }
    if ecg.duration_s() < params.min_duration_s {
        return Err(Error::RecordTooShort {
            seconds: ecg.duration_s(),
            required: params.min_duration_s,
        });
    }
    let report = validate_amplitude(ecg)?;
    if !report.passed {
        return Err(Error::AmplitudeOutOfRange {
            max_abs: report.max_abs_mv,
            limit: report.limit_mv,
        });
    }

    let integrated = integrated_energy(ecg.samples(), fs, params);
    let refractory = (params.refractory_s * fs).round() as usize;
    let candidates = candidate_peaks(&integrated, refractory);
    let beats = classify(&integrated, &candidates, fs, params);

    let lookback = (params.integration_s * fs).round() as usize + (0.05 * fs).round() as usize;
    let located = locate_r_waves(ecg.samples(), &beats, lookback, refractory);
    PeakList::new(located)
}

/// Band-pass, five-point derivative, squaring and trailing moving-window integration.
fn integrated_energy(x: &[f64], fs: f64, params: &QrsParams) -> Vec<f64> {
    let mut hp = Biquad::high_pass(params.band_low_hz, fs);
    let mut lp = Biquad::low_pass(params.band_high_hz, fs);
    let band: Vec<f64> = x.iter().map(|&v| lp.step(hp.step(v))).collect();

    let at = |i: isize| if i < 0 { 0.0 } else { band[i as usize] };
    let squared: Vec<f64> = (0..band.len() as isize)
        .map(|n| {
            let d = (2.0 * at(n) + at(n - 1) - at(n - 3) - 2.0 * at(n - 4)) * fs / 8.0;
            d * d
        })
        .collect();

    let width = ((params.integration_s * fs).round() as usize).max(1);
    let mut out = Vec::with_capacity(squared.len());
    let mut acc = 0.0;
    for i in 0..squared.len() {
        acc += squared[i];
        if i >= width {
            acc -= squared[i - width];
        }
        // running sums can drift slightly negative after long silences
        out.push((acc / width as f64).max(0.0));
    }
    out
}

/// Local maxima that dominate every sample within `radius` on both sides.
/// Samples before the record are treated as zero.
fn candidate_peaks(x: &[f64], radius: usize) -> Vec<usize> {
    let n = x.len();
    (0..n)
        .filter(|&i| {
            let v = x[i];
            if v <= 0.0 || i + 1 >= n {
                return false;
            }
            let lo = i.saturating_sub(radius);
            let hi = (i + radius + 1).min(n);
            x[lo..i].iter().all(|&u| u < v) && x[i + 1..hi].iter().all(|&u| u <= v)
        })
        .collect()
}

/// Dual adaptive thresholds on the integrated waveform with refractory blanking
/// and search-back for missed beats.
fn classify(x: &[f64], candidates: &[usize], fs: f64, params: &QrsParams) -> Vec<usize> {
    let Some(start) = x.iter().position(|&v| v > 0.0) else {
        return Vec::new();
    };
    let end = (start + (params.learning_s * fs).round() as usize).min(x.len());
    let learn = &x[start..end];
    let learn_max = learn.iter().copied().fold(0.0, f64::max);
    let learn_mean = learn.iter().sum::<f64>() / learn.len() as f64;

    let mut spk = 0.25 * learn_max;
    let mut npk = 0.5 * learn_mean;
    let threshold = |spk: f64, npk: f64| npk + 0.25 * (spk - npk);

    let refractory = (params.refractory_s * fs).round() as usize;
    let mut beats: Vec<usize> = Vec::new();
    let mut noise: Vec<usize> = Vec::new();
    let mut rr_recent: Vec<usize> = Vec::new();

    for &i in candidates {
        // search-back over noise peaks when a beat is overdue
        if let (Some(&last), false) = (beats.last(), rr_recent.is_empty()) {
            let rr_avg = rr_recent.iter().sum::<usize>() as f64 / rr_recent.len() as f64;
            if (i - last) as f64 > params.searchback_factor * rr_avg {
                let th2 = 0.5 * threshold(spk, npk);
                let missed = noise
                    .iter()
                    .copied()
                    .filter(|&j| j > last + refractory && j < i && x[j] >= th2)
                    .fold(None, |best: Option<usize>, j| match best {
                        Some(b) if x[b] >= x[j] => Some(b),
                        _ => Some(j),
                    });
                if let Some(j) = missed {
                    spk = 0.25 * x[j] + 0.75 * spk;
                    push_rr(&mut rr_recent, j - last);
                    beats.push(j);
                }
            }
        }

        let within_refractory = beats.last().is_some_and(|&last| i - last < refractory);
        if within_refractory {
            continue;
        }
        if x[i] >= threshold(spk, npk) {
            spk = 0.125 * x[i] + 0.875 * spk;
            if let Some(&last) = beats.last() {
                push_rr(&mut rr_recent, i - last);
            }
            beats.push(i);
        } else {
            npk = 0.125 * x[i] + 0.875 * npk;
            noise.push(i);
        }
    }
    beats
}

fn push_rr(recent: &mut Vec<usize>, rr: usize) {
    recent.push(rr);
    if recent.len() > 8 {
        recent.remove(0);
    }
}

/// Moves each integrated-waveform beat back to the largest raw sample in the
/// preceding `lookback` samples, then re-applies the refractory rule.
fn locate_r_waves(raw: &[f64], beats: &[usize], lookback: usize, refractory: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(beats.len());
    for &b in beats {
        let lo = b.saturating_sub(lookback);
        let mut best = lo;
        for j in lo..=b {
            if raw[j] > raw[best] {
                best = j;
            }
        }
        match out.last_mut() {
            Some(prev) if best <= *prev || best - *prev < refractory => {
                if best > *prev && raw[best] > raw[*prev] {
                    *prev = best;
                }
            }
            _ => out.push(best),
        }
    }
    out
}

/// RBJ biquad, direct form I, Butterworth Q.
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl Biquad {
    fn new(b: [f64; 3], a0: f64, a: [f64; 2]) -> Self {
        Self {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [a[0] / a0, a[1] / a0],
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn coeffs(f0: f64, fs: f64) -> (f64, f64) {
        let w0 = 2.0 * PI * f0 / fs;
        let alpha = w0.sin() / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
        (w0.cos(), alpha)
    }

    fn low_pass(f0: f64, fs: f64) -> Self {
        let (c, alpha) = Self::coeffs(f0, fs);
        Self::new(
            [(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0],
            1.0 + alpha,
            [-2.0 * c, 1.0 - alpha],
        )
    }

    fn high_pass(f0: f64, fs: f64) -> Self {
        let (c, alpha) = Self::coeffs(f0, fs);
        Self::new(
            [(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0],
            1.0 + alpha,
            [-2.0 * c, 1.0 - alpha],
        )
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.b[1] * self.x1 + self.b[2] * self.x2
            - self.a[0] * self.y1
            - self.a[1] * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}
