//! Time-domain HRV metrics, age normalization and the cohort feature matrix.

use std::collections::HashSet;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Cohort, AGE};
use crate::signal::{RrSeries, SleepStage, StageMap};

pub const TARGET_COLUMN: &str = "log_glucose";
pub const PSQI_AGE: &str = "psqi_age";
pub const AGE_NORMALIZED_SUFFIX: &str = "_age_normalized";
/// Prefix of whole-recording HRV columns, computed without stage segmentation.
pub const RECORDING_PREFIX: &str = "ecg_";

/// HRV metric names in column order.
pub const METRICS: [&str; 5] = ["mean_rr", "rmssd", "sdnn", "pnn50", "rr_range"];

/// Time-domain HRV metrics in ms (pNN50 in percent).
///
/// The difference-based metrics need two intervals and are `None` for a
/// single-interval series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrvMetrics {
    pub mean_rr: f64,
    pub rmssd: Option<f64>,
    pub sdnn: Option<f64>,
    pub pnn50: Option<f64>,
    pub rr_range: f64,
}

impl HrvMetrics {
    /// Values in [`METRICS`] order.
    pub fn values(&self) -> [Option<f64>; 5] {
        [
            Some(self.mean_rr),
            self.rmssd,
            self.sdnn,
            self.pnn50,
            Some(self.rr_range),
        ]
    }
}

pub fn hrv_metrics(rr: &[f64]) -> Result<HrvMetrics> {
    if rr.is_empty() {
        return Err(Error::Empty("RR series has no intervals".into()));
    }
    let n = rr.len() as f64;
    let mean_rr = rr.iter().sum::<f64>() / n;
    let (min, max) = rr
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));

    let (rmssd, sdnn, pnn50) = if rr.len() < 2 {
        (None, None, None)
    } else {
        let diffs: Vec<f64> = rr.windows(2).map(|w| w[1] - w[0]).collect();
        let m = diffs.len() as f64;
        let rmssd = (diffs.iter().map(|d| d * d).sum::<f64>() / m).sqrt();
        let over = diffs.iter().filter(|d| d.abs() > 50.0).count();
        let var = rr.iter().map(|v| (v - mean_rr).powi(2)).sum::<f64>() / (n - 1.0);
        (Some(rmssd), Some(var.sqrt()), Some(100.0 * over as f64 / m))
    };

    Ok(HrvMetrics {
        mean_rr,
        rmssd,
        sdnn,
        pnn50,
        rr_range: max - min,
    })
}

/// Age-normalization constants: `raw / (age / reference_age + epsilon)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgeNormParams {
    pub reference_age: f64,
    pub epsilon: f64,
}

impl Default for AgeNormParams {
    fn default() -> Self {
        Self {
            reference_age: 65.0,
            epsilon: 0.1,
        }
    }
}

impl AgeNormParams {
    pub fn new(reference_age: f64, epsilon: f64) -> Result<Self> {
        let p = Self {
            reference_age,
            epsilon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reference_age.is_finite() && self.reference_age > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "reference age must be > 0, got {}",
                self.reference_age
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

pub fn age_normalize(raw: f64, age: f64, params: &AgeNormParams) -> Result<f64> {
    if !(age.is_finite() && age > 0.0) {
        return Err(Error::InvalidParameter(format!("age must be > 0, got {age}")));
    }
    Ok(raw / (age / params.reference_age + params.epsilon))
}

/// Natural log of glucose in mmol/L.
pub fn log_glucose(glucose: f64) -> Result<f64> {
    if !(glucose.is_finite() && glucose > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "glucose must be > 0 mmol/L, got {glucose}"
        )));
    }
    Ok(glucose.ln())
}

/// Inverse of [`log_glucose`].
pub fn back_transform(y: f64) -> f64 {
    y.exp()
}

/// Which derived columns [`build_feature_matrix`] emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureOptions {
    /// Emit `hrv_{stage}_mean_rr_age_normalized`.
    pub age_normalization: bool,
    /// Also normalize rmssd, sdnn, pnn50 and rr_range.
    pub normalize_all_metrics: bool,
    /// Emit `psqi_age = psqi * age` when the PSQI column exists.
    pub psqi_age: bool,
    pub psqi_column: String,
    /// Emit `ecg_{metric}` over the whole cleaned recording.
    pub recording_hrv: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self {
            age_normalization: true,
            normalize_all_metrics: false,
            psqi_age: true,
            psqi_column: "psqi".into(),
            recording_hrv: true,
        }
    }
}

pub fn hrv_column(stage: SleepStage, metric: &str) -> String {
    format!("hrv_{}_{metric}", stage.column_prefix())
}

pub fn is_hrv_column(name: &str) -> bool {
    name.starts_with("hrv_")
}

pub fn is_age_normalized_column(name: &str) -> bool {
    is_hrv_column(name) && name.ends_with(AGE_NORMALIZED_SUFFIX)
}

/// Column families, by naming convention: `hrv_{stage}_*` for stage HRV,
/// `ecg_*` for whole-recording HRV, anything else is clinical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    StageHrv,
    RecordingHrv,
    Clinical,
}

impl FeatureKind {
    pub fn of(name: &str) -> Self {
        if is_hrv_column(name) {
            FeatureKind::StageHrv
        } else if name.starts_with(RECORDING_PREFIX) {
            FeatureKind::RecordingHrv
        } else {
            FeatureKind::Clinical
        }
    }
}

/// Cleaned RR data for one subject.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SubjectSeries {
    /// Whole recording after artifact removal; `None` skips the `ecg_*` columns.
    pub recording: Option<RrSeries>,
    pub stages: StageMap,
}

impl From<StageMap> for SubjectSeries {
    fn from(stages: StageMap) -> Self {
        Self {
            recording: None,
            stages,
        }
    }
}

/// Stage an HRV column belongs to, from its `hrv_{stage}_` prefix.
pub fn column_stage(name: &str) -> Option<SleepStage> {
    let rest = name.strip_prefix("hrv_")?;
    SleepStage::ALL
        .into_iter()
        .find(|s| rest.starts_with(&format!("{}_", s.column_prefix())))
}

/// Named feature columns by subjects, plus the log-glucose target.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    subject_ids: Vec<String>,
    names: Vec<String>,
    columns: Vec<Vec<Option<f64>>>,
    target: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(
        subject_ids: Vec<String>,
        names: Vec<String>,
        columns: Vec<Vec<Option<f64>>>,
        target: Vec<f64>,
    ) -> Result<Self> {
        if subject_ids.len() != target.len() {
            return Err(Error::LengthMismatch {
                left: subject_ids.len(),
                right: target.len(),
            });
        }
        if names.len() != columns.len() {
            return Err(Error::LengthMismatch {
                left: names.len(),
                right: columns.len(),
            });
        }
        if let Some(c) = columns.iter().find(|c| c.len() != target.len()) {
            return Err(Error::LengthMismatch {
                left: c.len(),
                right: target.len(),
            });
        }
        let mut seen = HashSet::new();
        for n in &names {
            if n == "subject_id" || n == TARGET_COLUMN || !seen.insert(n.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate or reserved column name `{n}`"
                )));
            }
        }
        if target.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("target".into()));
        }
        if columns.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature values".into()));
        }
        Ok(Self {
            subject_ids,
            names,
            columns,
            target,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &[Option<f64>])> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.columns.iter().map(Vec::as_slice))
    }

    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    /// Restricts to columns accepted by `keep`, preserving order.
    pub fn filter_columns(&self, keep: impl Fn(&str) -> bool) -> FeatureMatrix {
        let (names, columns) = self
            .columns()
            .filter(|(n, _)| keep(n))
            .map(|(n, c)| (n.to_string(), c.to_vec()))
            .unzip();
        FeatureMatrix {
            subject_ids: self.subject_ids.clone(),
            names,
            columns,
            target: self.target.clone(),
        }
    }

    /// Rows in `rows` order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            subject_ids: rows.iter().map(|&r| self.subject_ids[r].clone()).collect(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            target: rows.iter().map(|&r| self.target[r]).collect(),
        }
    }

    /// Writes `subject_id, <features...>, log_glucose` with empty cells for missing values.
    pub fn write_csv(&self, path: impl AsRef<Path>, preamble: &[String]) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for line in preamble {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["subject_id".to_string()];
        header.extend(self.names.iter().cloned());
        header.push(TARGET_COLUMN.into());
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for r in 0..self.n_rows() {
            let mut rec = vec![self.subject_ids[r].clone()];
            rec.extend(
                self.columns
                    .iter()
                    .map(|c| c[r].map(|v| v.to_string()).unwrap_or_default()),
            );
            rec.push(self.target[r].to_string());
            w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
        }
        let body = w
            .into_inner()
            .map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
        out.push_str(&String::from_utf8_lossy(&body));
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::csv(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.first().map(String::as_str) != Some("subject_id") {
            return Err(Error::MissingColumn("subject_id".into()));
        }
        let target_col = headers
            .iter()
            .position(|h| h == TARGET_COLUMN)
            .ok_or_else(|| Error::MissingColumn(TARGET_COLUMN.into()))?;
        let feature_cols: Vec<usize> = (1..headers.len()).filter(|&c| c != target_col).collect();

        let mut ids = Vec::new();
        let mut target = Vec::new();
        let mut columns = vec![Vec::new(); feature_cols.len()];
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let line = i + 2;
            ids.push(rec.get(0).unwrap_or_default().to_string());
            let t = rec.get(target_col).unwrap_or_default();
            target.push(
                t.parse::<f64>()
                    .map_err(|_| Error::parse(path, line, format!("bad target `{t}`")))?,
            );
            for (k, &c) in feature_cols.iter().enumerate() {
                let cell = rec.get(c).unwrap_or_default();
                let v = if cell.is_empty() {
                    None
                } else {
                    Some(cell.parse::<f64>().map_err(|_| {
                        Error::parse(path, line, format!("bad value `{cell}` in {}", headers[c]))
                    })?)
                };
                columns[k].push(v);
            }
        }
        let names = feature_cols.iter().map(|&c| headers[c].clone()).collect();
        FeatureMatrix::new(ids, names, columns, target)
    }
}

/// Assembles per-stage HRV columns, optional age-normalized mean RR,
/// whole-recording HRV, clinical columns, `age`, `psqi_age`, and the
/// log-glucose target.
///
/// `stage_series[i]` belongs to `cohort.subjects()[i]`. Columns missing for
/// every subject are dropped.
pub fn build_feature_matrix(
    cohort: &Cohort,
    stage_series: &[SubjectSeries],
    params: &AgeNormParams,
    options: &FeatureOptions,
) -> Result<FeatureMatrix> {
    if cohort.is_empty() {
        return Err(Error::Empty("cohort has no subjects".into()));
    }
    if stage_series.len() != cohort.len() {
        return Err(Error::LengthMismatch {
            left: cohort.len(),
            right: stage_series.len(),
        });
    }
    params.validate()?;

    let mut names = Vec::new();
    for stage in SleepStage::ALL {
        for metric in METRICS {
            names.push(hrv_column(stage, metric));
        }
        if options.age_normalization {
            let normalized: &[&str] = if options.normalize_all_metrics {
                &METRICS
            } else {
                &METRICS[..1]
            };
            for metric in normalized {
                names.push(format!("{}{AGE_NORMALIZED_SUFFIX}", hrv_column(stage, metric)));
            }
        }
    }
    if options.recording_hrv {
        names.extend(METRICS.iter().map(|m| format!("{RECORDING_PREFIX}{m}")));
    }
    let clinical = cohort.clinical_columns();
    names.extend(clinical.iter().cloned());
    if !clinical.iter().any(|c| c == AGE) {
        names.push(AGE.into());
    }
    let with_psqi = options.psqi_age && clinical.contains(&options.psqi_column);
    if with_psqi {
        names.push(PSQI_AGE.into());
    }

    let rows: Vec<Vec<Option<f64>>> = cohort
        .subjects()
        .par_iter()
        .zip(stage_series.par_iter())
        .map(|(subject, series)| -> Result<Vec<Option<f64>>> {
            let mut row = Vec::with_capacity(names.len());
            for stage in SleepStage::ALL {
                let metrics = match series.stages.get(&stage) {
                    Some(rr) if !rr.is_empty() => Some(hrv_metrics(rr.intervals())?),
                    _ => None,
                };
                let values = metrics.map(|m| m.values()).unwrap_or([None; 5]);
                row.extend(values);
                if options.age_normalization {
                    let count = if options.normalize_all_metrics { 5 } else { 1 };
                    for v in &values[..count] {
                        row.push(match v {
                            Some(raw) => Some(age_normalize(*raw, subject.age, params)?),
                            None => None,
                        });
                    }
                }
            }
            if options.recording_hrv {
                let values = match &series.recording {
                    Some(rr) if !rr.is_empty() => hrv_metrics(rr.intervals())?.values(),
                    _ => [None; 5],
                };
                row.extend(values);
            }
            row.extend(clinical.iter().map(|c| subject.clinical.get(c).copied().flatten()));
            if !clinical.iter().any(|c| c == AGE) {
                row.push(Some(subject.age));
            }
            if with_psqi {
                let psqi = subject.clinical.get(&options.psqi_column).copied().flatten();
                row.push(psqi.map(|p| p * subject.age));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let target = cohort
        .subjects()
        .iter()
        .map(|s| log_glucose(s.glucose))
        .collect::<Result<Vec<_>>>()?;

    let mut kept_names = Vec::new();
    let mut columns = Vec::new();
    for (j, name) in names.into_iter().enumerate() {
        let col: Vec<Option<f64>> = rows.iter().map(|r| r[j]).collect();
        if col.iter().all(Option::is_none) {
            warn!("dropping all-missing feature column `{name}`");
            continue;
        }
        kept_names.push(name);
        columns.push(col);
    }
    let ids = cohort.subjects().iter().map(|s| s.subject_id.clone()).collect();
    FeatureMatrix::new(ids, kept_names, columns, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{SignalRef, SubjectRecord};
    use crate::signal::RrSeries;
    use approx::assert_relative_eq;
    use indexmap::IndexMap;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    #[test]
    fn strict_pnn50_boundary() {
        let m = hrv_metrics(&[800.0, 850.0, 800.0]).unwrap();
        assert_relative_eq!(m.mean_rr, 816.6666666666666, epsilon = 1e-9);
        assert_eq!(m.rmssd, Some(50.0));
        assert_eq!(m.rr_range, 50.0);
        assert_eq!(m.pnn50, Some(0.0));

        let m = hrv_metrics(&[800.0, 860.0, 820.0]).unwrap();
        assert_eq!(m.pnn50, Some(50.0));
    }

    #[test]
    fn constant_series() {
        let m = hrv_metrics(&[900.0; 5]).unwrap();
        assert_eq!(m.rmssd, Some(0.0));
        assert_eq!(m.sdnn, Some(0.0));
        assert_eq!(m.pnn50, Some(0.0));
        assert_eq!(m.rr_range, 0.0);
    }

    #[test]
    fn single_interval_and_empty() {
        let m = hrv_metrics(&[900.0]).unwrap();
        assert_eq!((m.mean_rr, m.rr_range), (900.0, 0.0));
        assert!(m.rmssd.is_none() && m.sdnn.is_none() && m.pnn50.is_none());
        assert!(hrv_metrics(&[]).is_err());
    }

    #[test]
    fn age_normalization_cases() {
        let p = AgeNormParams::default();
        assert_relative_eq!(age_normalize(1000.0, 65.0, &p).unwrap(), 909.0909090909091, epsilon = 1e-9);
        assert_eq!(age_normalize(0.0, 40.0, &p).unwrap(), 0.0);
        assert_relative_eq!(age_normalize(900.0, 32.5, &p).unwrap(), 1500.0, epsilon = 1e-9);
        assert!(age_normalize(900.0, 0.0, &p).is_err());
        assert!(AgeNormParams::new(65.0, 0.0).is_err());
    }

    #[test]
    fn log_glucose_cases() {
        assert_eq!(log_glucose(1.0).unwrap(), 0.0);
        assert_relative_eq!(log_glucose(std::f64::consts::E).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(log_glucose(5.5).unwrap(), 1.70475, epsilon = 1e-5);
        assert!(log_glucose(0.0).is_err());
        assert_eq!(back_transform(0.0), 1.0);
        assert_relative_eq!(back_transform(1.7047480922384253), 5.5, epsilon = 1e-9);
        for i in 0..=295 {
            let g = 0.5 + 0.1 * i as f64;
            assert_relative_eq!(back_transform(log_glucose(g).unwrap()), g, max_relative = 1e-12);
        }
    }

    fn subject(id: &str, age: f64, glucose: f64, clinical: &[(&str, f64)]) -> SubjectRecord {
        SubjectRecord {
            subject_id: id.into(),
            age,
            glucose,
            clinical: clinical
                .iter()
                .map(|(k, v)| (k.to_string(), Some(*v)))
                .collect::<IndexMap<_, _>>(),
            signal: SignalRef::default(),
        }
    }

    fn stages(ds: &[f64], rem: &[f64], rs: &[f64]) -> StageMap {
        let mk = |v: &[f64]| RrSeries::from_intervals(v.to_vec(), None).unwrap();
        BTreeMap::from([
            (SleepStage::Ds, mk(ds)),
            (SleepStage::Rem, mk(rem)),
            (SleepStage::Rs, mk(rs)),
        ])
    }

    #[test]
    fn single_subject_ds_only() {
        let cohort = Cohort::new(vec![subject("s1", 65.0, std::f64::consts::E, &[])]).unwrap();
        let m = build_feature_matrix(
            &cohort,
            &[stages(&[1000.0, 1000.0, 1000.0], &[], &[]).into()],
            &AgeNormParams::default(),
            &FeatureOptions::default(),
        )
        .unwrap();
        assert_eq!(m.column("hrv_ds_mean_rr").unwrap(), &[Some(1000.0)]);
        assert_relative_eq!(
            m.column("hrv_ds_mean_rr_age_normalized").unwrap()[0].unwrap(),
            909.09,
            epsilon = 0.01
        );
        assert_relative_eq!(m.target()[0], 1.0, epsilon = 1e-15);
        // REM/RS never observed: dropped as all-missing
        assert!(m.column("hrv_rem_mean_rr").is_none());
        assert_eq!(m.column("age").unwrap(), &[Some(65.0)]);
    }

    #[test]
    fn column_bookkeeping_and_switches() {
        let cohort = Cohort::new(vec![
            subject("a", 30.0, 5.0, &[("dbp", 70.0), ("psqi", 5.0)]),
            subject("b", 60.0, 6.0, &[("dbp", 85.0), ("psqi", 9.0)]),
        ])
        .unwrap();
        let full = [1000.0, 980.0, 1010.0];
        let mut series: Vec<SubjectSeries> =
            vec![stages(&full, &full, &full).into(), stages(&full, &[], &full).into()];
        series[0].recording = Some(RrSeries::from_intervals(vec![900.0, 1000.0], None).unwrap());
        let m = build_feature_matrix(
            &cohort,
            &series,
            &AgeNormParams::default(),
            &FeatureOptions::default(),
        )
        .unwrap();
        let hrv = m.names().iter().filter(|n| is_hrv_column(n)).count();
        assert_eq!(hrv, 18);
        assert_eq!(m.names().iter().filter(|n| is_age_normalized_column(n)).count(), 3);
        assert_eq!(m.column("psqi_age").unwrap(), &[Some(150.0), Some(540.0)]);
        assert_eq!(m.column("dbp").unwrap(), &[Some(70.0), Some(85.0)]);
        // empty REM for subject b is missing, not zero
        assert_eq!(m.column("hrv_rem_rmssd").unwrap()[1], None);
        assert_eq!(m.column("hrv_rem_mean_rr_age_normalized").unwrap()[1], None);
        assert_eq!(m.column("ecg_rr_range").unwrap(), &[Some(100.0), None]);
        let kinds: Vec<FeatureKind> = m.names().iter().map(|n| FeatureKind::of(n)).collect();
        assert_eq!(kinds.iter().filter(|k| **k == FeatureKind::RecordingHrv).count(), 5);
        assert_eq!(kinds.iter().filter(|k| **k == FeatureKind::Clinical).count(), 4);

        let off = FeatureOptions {
            age_normalization: false,
            psqi_age: false,
            ..FeatureOptions::default()
        };
        let m = build_feature_matrix(&cohort, &series, &AgeNormParams::default(), &off).unwrap();
        assert!(m.names().iter().all(|n| !n.ends_with(AGE_NORMALIZED_SUFFIX)));
        assert!(m.column("psqi_age").is_none());
        assert_eq!(m.names().iter().filter(|n| is_hrv_column(n)).count(), 15);

        let all = FeatureOptions {
            normalize_all_metrics: true,
            ..FeatureOptions::default()
        };
        let m = build_feature_matrix(&cohort, &series, &AgeNormParams::default(), &all).unwrap();
        assert_eq!(m.names().iter().filter(|n| is_age_normalized_column(n)).count(), 15);
    }

    #[test]
    fn csv_round_trip_with_missing() {
        let m = FeatureMatrix::new(
            vec!["a".into(), "b".into()],
            vec!["hrv_ds_mean_rr".into(), "dbp".into()],
            vec![vec![Some(812.5), None], vec![Some(70.0), Some(0.1 + 0.2)]],
            vec![1.6, 1.75],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        m.write_csv(&p, &["seed: 42".into()]).unwrap();
        assert_eq!(FeatureMatrix::read_csv(&p).unwrap(), m);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# seed: 42\nsubject_id,hrv_ds_mean_rr,dbp,log_glucose\n"));
        assert!(text.contains("b,,"));
    }

    #[test]
    fn stage_of_column() {
        assert_eq!(column_stage("hrv_rem_mean_rr_age_normalized"), Some(SleepStage::Rem));
        assert_eq!(column_stage("hrv_rs_pnn50"), Some(SleepStage::Rs));
        assert_eq!(column_stage("dbp"), None);
    }

    proptest! {
        #[test]
        fn normalization_monotone_in_age(raw in 1.0f64..3000.0, a in 1.0f64..100.0, b in 1.0f64..100.0) {
            let p = AgeNormParams::default();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-9);
            prop_assert!(age_normalize(raw, lo, &p).unwrap() > age_normalize(raw, hi, &p).unwrap());
        }

        #[test]
        fn normalization_linear_in_raw(raw in -3000.0f64..3000.0, k in -10.0f64..10.0, age in 1.0f64..100.0) {
            let p = AgeNormParams::default();
            let lhs = age_normalize(k * raw, age, &p).unwrap();
            let rhs = k * age_normalize(raw, age, &p).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }

        #[test]
        fn metric_invariants(v in proptest::collection::vec(300.0f64..2000.0, 2..200)) {
            let m = hrv_metrics(&v).unwrap();
            prop_assert!(m.rmssd.unwrap() >= 0.0);
            prop_assert!(m.sdnn.unwrap() >= 0.0);
            let p = m.pnn50.unwrap();
            prop_assert!((0.0..=100.0).contains(&p));
            prop_assert!(m.rr_range >= 0.0);
        }
    }
}
