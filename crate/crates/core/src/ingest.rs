//! Loading cohort tables, RR series, ECG recordings and stage annotations.
//!
//! All inputs are UTF-8 delimiter-separated text with `.` decimals. Blank lines
//! and lines starting with `#` are ignored in the single-column formats.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{EcgRecord, RrSeries, SleepStage};

/// Mandatory clinical table columns.
pub const SUBJECT_ID: &str = "subject_id";
pub const AGE: &str = "age";
pub const GLUCOSE: &str = "glucose_mmol_L";

/// Optional per-subject signal path columns, resolved against the table's directory.
pub const RR_FILE: &str = "rr_file";
pub const ECG_FILE: &str = "ecg_file";
pub const STAGES_FILE: &str = "stages_file";

/// Plausible RR range in ms; intervals outside it are flagged on load.
pub const RR_PHYSIOLOGICAL_MS: (f64, f64) = (200.0, 4000.0);

pub const DEFAULT_FS_HZ: f64 = 250.0;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalRef {
    pub rr_file: Option<PathBuf>,
    pub ecg_file: Option<PathBuf>,
    pub stages_file: Option<PathBuf>,
}

impl SignalRef {
    fn is_empty(&self) -> bool {
        self.rr_file.is_none() && self.ecg_file.is_none() && self.stages_file.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    /// Years.
    pub age: f64,
    /// mmol/L.
    pub glucose: f64,
    /// Numeric clinical measurements in table column order; `None` is missing.
    pub clinical: IndexMap<String, Option<f64>>,
    pub signal: SignalRef,
}

impl SubjectRecord {
    fn validate(&self) -> Result<()> {
        if !(self.age.is_finite() && self.age > 0.0) {
            return Err(Error::NonPhysiological {
                field: "age",
                subject: self.subject_id.clone(),
                value: self.age,
            });
        }
        if !(self.glucose.is_finite() && self.glucose > 0.0) {
            return Err(Error::NonPhysiological {
                field: "glucose",
                subject: self.subject_id.clone(),
                value: self.glucose,
            });
        }
        Ok(())
    }
}

/// Subjects in load order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cohort {
    subjects: Vec<SubjectRecord>,
}

impl Cohort {
    /// Checks positivity of age/glucose and subject id uniqueness.
    pub fn new(subjects: Vec<SubjectRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &subjects {
            s.validate()?;
            if !seen.insert(s.subject_id.as_str()) {
                return Err(Error::DuplicateSubject(s.subject_id.clone()));
            }
        }
        Ok(Self { subjects })
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Clinical column names in first-seen order.
    pub fn clinical_columns(&self) -> Vec<String> {
        let mut names: IndexMap<&str, ()> = IndexMap::new();
        for s in &self.subjects {
            for k in s.clinical.keys() {
                names.insert(k, ());
            }
        }
        names.keys().map(|k| k.to_string()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSpan {
    /// Seconds, inclusive.
    pub start: f64,
    /// Seconds, exclusive.
    pub end: f64,
    pub stage: SleepStage,
}

/// Sorted, non-overlapping stage spans.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageAnnotation {
    spans: Vec<StageSpan>,
}

impl StageAnnotation {
    pub fn new(spans: Vec<StageSpan>) -> Result<Self> {
        for (i, s) in spans.iter().enumerate() {
            if !(s.start.is_finite() && s.end.is_finite() && s.start < s.end) {
                return Err(Error::InvalidAnnotation(format!(
                    "span {i} has start {} >= end {}",
                    s.start, s.end
                )));
            }
        }
        for (i, w) in spans.windows(2).enumerate() {
            if w[1].start < w[0].end {
                return Err(Error::InvalidAnnotation(format!(
                    "span {} overlaps or precedes span {i}",
                    i + 1
                )));
            }
        }
        Ok(Self { spans })
    }

    pub fn spans(&self) -> &[StageSpan] {
        &self.spans
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Stage whose half-open span contains `t` seconds.
    pub fn stage_at(&self, t: f64) -> Option<SleepStage> {
        let idx = self.spans.partition_point(|s| s.start <= t);
        let span = self.spans.get(idx.checked_sub(1)?)?;
        (t < span.end).then_some(span.stage)
    }
}

/// An RR series plus the positions of intervals outside the physiological range.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRr {
    pub series: RrSeries,
    pub out_of_range: Vec<usize>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn sniff_delimiter(header: &str) -> u8 {
    if header.contains('\t') {
        b'\t'
    } else if header.contains(';') && !header.contains(',') {
        b';'
    } else {
        b','
    }
}

fn parse_optional(cell: &str) -> Option<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
        return Some(None);
    }
    cell.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some)
}

/// Splits a line of a single-column format on commas, tabs, semicolons or whitespace.
fn fields(line: &str) -> Vec<&str> {
    line.split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|f| !f.is_empty())
        .collect()
}

/// Content lines with 1-based line numbers, skipping blanks and `#` comments.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn load_clinical_table(path: impl AsRef<Path>) -> Result<Cohort> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let header_line = text.lines().next().unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(sniff_delimiter(header_line))
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let id_col = column(SUBJECT_ID).ok_or_else(|| Error::MissingColumn(SUBJECT_ID.into()))?;
    let age_col = column(AGE).ok_or_else(|| Error::MissingColumn(AGE.into()))?;
    let glu_col = column(GLUCOSE).ok_or_else(|| Error::MissingColumn(GLUCOSE.into()))?;
    let rr_col = column(RR_FILE);
    let ecg_col = column(ECG_FILE);
    let stages_col = column(STAGES_FILE);
    let reserved = [Some(id_col), Some(age_col), Some(glu_col), rr_col, ecg_col, stages_col];

    let rows: Vec<csv::StringRecord> = reader
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::csv(path, e))?;

    // A clinical column is numeric when every non-missing cell parses.
    let clinical_cols: Vec<usize> = (0..headers.len())
        .filter(|c| !reserved.contains(&Some(*c)))
        .filter(|&c| {
            let numeric = rows
                .iter()
                .all(|r| parse_optional(r.get(c).unwrap_or("")).is_some());
            if !numeric {
                warn!("{}: skipping non-numeric column `{}`", path.display(), headers[c]);
            }
            numeric
        })
        .collect();

    let mut subjects = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let line = i + 2;
        let cell = |c: usize| row.get(c).unwrap_or("");
        let id = cell(id_col).to_string();
        if id.is_empty() {
            return Err(Error::parse(path, line, "empty subject_id"));
        }
        let number = |c: usize, what: &str| {
            cell(c).parse::<f64>().map_err(|_| {
                Error::parse(path, line, format!("non-numeric {what} `{}`", cell(c)))
            })
        };
        let path_cell = |c: Option<usize>| {
            c.map(cell)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
        };
        let clinical = clinical_cols
            .iter()
            .map(|&c| (headers[c].clone(), parse_optional(cell(c)).flatten()))
            .collect();
        subjects.push(SubjectRecord {
            subject_id: id,
            age: number(age_col, "age")?,
            glucose: number(glu_col, "glucose")?,
            clinical,
            signal: SignalRef {
                rr_file: path_cell(rr_col),
                ecg_file: path_cell(ecg_col),
                stages_file: path_cell(stages_col),
            },
        });
    }

    let cohort = Cohort::new(subjects)?;
    if cohort.len() < 2 {
        return Err(Error::CohortTooSmall {
            needed: 2,
            got: cohort.len(),
        });
    }
    Ok(cohort)
}

/// Writes the cohort in the same layout `load_clinical_table` reads.
pub fn write_clinical_table(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let subjects = cohort.subjects();
    let has = |f: fn(&SignalRef) -> bool| subjects.iter().any(|s| f(&s.signal));
    let with_rr = has(|s| s.rr_file.is_some());
    let with_ecg = has(|s| s.ecg_file.is_some());
    let with_stages = has(|s| s.stages_file.is_some());
    let clinical = cohort.clinical_columns();

    let mut header = vec![SUBJECT_ID.to_string(), AGE.to_string(), GLUCOSE.to_string()];
    for (on, name) in [(with_rr, RR_FILE), (with_ecg, ECG_FILE), (with_stages, STAGES_FILE)] {
        if on {
            header.push(name.to_string());
        }
    }
    header.extend(clinical.iter().cloned());

    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    let show = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
    for s in subjects {
        let mut rec = vec![s.subject_id.clone(), s.age.to_string(), s.glucose.to_string()];
        if with_rr {
            rec.push(show(&s.signal.rr_file));
        }
        if with_ecg {
            rec.push(show(&s.signal.ecg_file));
        }
        if with_stages {
            rec.push(show(&s.signal.stages_file));
        }
        for c in &clinical {
            rec.push(
                s.clinical
                    .get(c)
                    .copied()
                    .flatten()
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            );
        }
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads RR intervals (ms), one per line, with an optional DS|REM|RS stage column.
///
/// Onsets are reconstructed as cumulative sums from 0 s. A header line is allowed.
pub fn load_rr_series(path: impl AsRef<Path>) -> Result<LoadedRr> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut intervals = Vec::new();
    let mut labels = Vec::new();
    let mut any_label = false;

    for (k, (line, content)) in content_lines(&text).enumerate() {
        let f = fields(content);
        let Ok(rr) = f[0].parse::<f64>() else {
            if k == 0 {
                continue; // header
            }
            return Err(Error::parse(path, line, format!("unparsable RR `{}`", f[0])));
        };
        if !(rr.is_finite() && rr > 0.0) {
            return Err(Error::NonPositiveRr {
                index: intervals.len(),
                value: rr,
            });
        }
        let label = match f.get(1).copied() {
            None | Some("-") => None,
            Some(tok) => Some(
                tok.parse::<SleepStage>()
                    .map_err(|e| Error::parse(path, line, e.to_string()))?,
            ),
        };
        any_label |= label.is_some();
        intervals.push(rr);
        labels.push(label);
    }
    if intervals.is_empty() {
        return Err(Error::Empty(format!("{} contains no RR intervals", path.display())));
    }

    let (lo, hi) = RR_PHYSIOLOGICAL_MS;
    let out_of_range: Vec<usize> = intervals
        .iter()
        .enumerate()
        .filter(|(_, &v)| !(lo..=hi).contains(&v))
        .map(|(i, _)| i)
        .collect();
    if !out_of_range.is_empty() {
        warn!(
            "{}: {} interval(s) outside [{lo}, {hi}] ms flagged",
            path.display(),
            out_of_range.len()
        );
    }
    let series = RrSeries::from_intervals(intervals, any_label.then_some(labels))?;
    Ok(LoadedRr {
        series,
        out_of_range,
    })
}

/// Loads one mV sample per line at sampling rate `fs`.
pub fn load_ecg(path: impl AsRef<Path>, fs: f64) -> Result<EcgRecord> {
    let path = path.as_ref();
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::InvalidSamplingRate(fs));
    }
    let text = read_text(path)?;
    let samples = content_lines(&text)
        .map(|(line, content)| {
            let f = fields(content);
            f[f.len() - 1]
                .parse::<f64>()
                .map_err(|_| Error::parse(path, line, format!("unparsable sample `{content}`")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if samples.is_empty() {
        return Err(Error::Empty(format!("{} contains no samples", path.display())));
    }
    EcgRecord::new(samples, fs)
}

/// Loads `start_s,end_s,stage` rows. A header line is allowed.
pub fn load_stage_annotation(path: impl AsRef<Path>) -> Result<StageAnnotation> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut spans = Vec::new();
    for (k, (line, content)) in content_lines(&text).enumerate() {
        let f = fields(content);
        if f.len() < 3 {
            return Err(Error::parse(path, line, "expected start, end, stage"));
        }
        let (Ok(start), Ok(end)) = (f[0].parse::<f64>(), f[1].parse::<f64>()) else {
            if k == 0 {
                continue;
            }
            return Err(Error::parse(path, line, "unparsable span bounds"));
        };
        let stage = f[2]
            .parse::<SleepStage>()
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        spans.push(StageSpan { start, end, stage });
    }
    StageAnnotation::new(spans)
}

/// Resolves a subject's signal paths against `base`.
pub fn resolve(base: &Path, signal: &SignalRef) -> SignalRef {
    if signal.is_empty() {
        return signal.clone();
    }
    let join = |p: &Option<PathBuf>| p.as_ref().map(|p| base.join(p));
    SignalRef {
        rr_file: join(&signal.rr_file),
        ecg_file: join(&signal.ecg_file),
        stages_file: join(&signal.stages_file),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn loads_two_row_table() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.csv",
            "subject_id,age,glucose_mmol_L,dbp\ns1,40,5.5,80\ns2,61,6.1,92\n",
        );
        let cohort = load_clinical_table(&p).unwrap();
        assert_eq!(cohort.len(), 2);
        assert_eq!(cohort.subjects()[0].clinical["dbp"], Some(80.0));
        assert_eq!(cohort.subjects()[1].subject_id, "s2");
    }

    #[test]
    fn missing_glucose_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.csv", "subject_id,age\ns1,40\ns2,50\n");
        let err = load_clinical_table(&p).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == GLUCOSE));
        assert!(err.to_string().contains("missing mandatory column"));
    }

    #[test]
    fn negative_age_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.csv",
            "subject_id,age,glucose_mmol_L\ns1,-5,5.5\ns2,50,6\n",
        );
        let err = load_clinical_table(&p).unwrap_err();
        assert!(err.to_string().contains("non-physiological age"), "{err}");
    }

    #[test]
    fn duplicate_and_non_numeric() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.csv",
            "subject_id,age,glucose_mmol_L\ns1,40,5.5\ns1,50,6\n",
        );
        assert!(matches!(
            load_clinical_table(&p),
            Err(Error::DuplicateSubject(_))
        ));
        let p = write(
            dir.path(),
            "d.csv",
            "subject_id,age,glucose_mmol_L\ns1,forty,5.5\ns2,50,6\n",
        );
        assert!(matches!(load_clinical_table(&p), Err(Error::Parse { .. })));
        let p = write(
            dir.path(),
            "e.csv",
            "subject_id,age,glucose_mmol_L\ns1,40,0\ns2,50,6\n",
        );
        assert!(matches!(
            load_clinical_table(&p),
            Err(Error::NonPhysiological { field: "glucose", .. })
        ));
    }

    #[test]
    fn tab_separated_with_text_and_missing_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.tsv",
            "subject_id\tage\tglucose_mmol_L\tsex\tpsqi\trr_file\na\t30\t5\tM\t7\ta.rr\nb\t60\t6.5\tF\t\tb.rr\n",
        );
        let c = load_clinical_table(&p).unwrap();
        let s = &c.subjects()[1];
        assert_eq!(s.clinical.keys().collect::<Vec<_>>(), vec!["psqi"]);
        assert_eq!(s.clinical["psqi"], None);
        assert_eq!(s.signal.rr_file.as_deref(), Some(Path::new("b.rr")));
    }

    #[test]
    fn clinical_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.csv",
            "subject_id,age,glucose_mmol_L,rr_file,dbp,psqi\ns1,40.25,5.5,s1.rr,80,\ns2,61,6.123456789,s2.rr,92.5,11\ns3,33,4.9,,71,3\n",
        );
        let cohort = load_clinical_table(&p).unwrap();
        let out = dir.path().join("out.csv");
        write_clinical_table(&cohort, &out).unwrap();
        assert_eq!(load_clinical_table(&out).unwrap(), cohort);
    }

    #[test]
    fn rr_onsets_and_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.rr", "1000\n1000\n1000\n");
        let rr = load_rr_series(&p).unwrap();
        assert_eq!(rr.series.onsets(), &[0.0, 1.0, 2.0]);
        assert!(rr.out_of_range.is_empty());
        assert!(rr.series.stages().is_none());

        let p = write(dir.path(), "b.rr", "rr_ms,stage\n800,DS\n5000,REM\n810,\n");
        let rr = load_rr_series(&p).unwrap();
        assert_eq!(rr.out_of_range, vec![1]);
        assert_eq!(rr.series.intervals(), &[800.0, 5000.0, 810.0]);
        assert_eq!(
            rr.series.stages().unwrap(),
            &[Some(SleepStage::Ds), Some(SleepStage::Rem), None]
        );

        let p = write(dir.path(), "c.rr", "800\n-10\n");
        assert!(matches!(
            load_rr_series(&p),
            Err(Error::NonPositiveRr { index: 1, .. })
        ));
    }

    #[test]
    fn ecg_loading() {
        let dir = tempfile::tempdir().unwrap();
        let body: String = (0..250).map(|i| format!("{}\n", (i as f64 * 0.01).sin())).collect();
        let p = write(dir.path(), "e.txt", &body);
        let ecg = load_ecg(&p, 250.0).unwrap();
        assert_eq!(ecg.duration_s(), 1.0);

        let empty = write(dir.path(), "empty.txt", "");
        assert!(matches!(load_ecg(&empty, 250.0), Err(Error::Empty(_))));
        assert!(matches!(
            load_ecg(&p, 0.0),
            Err(Error::InvalidSamplingRate(_))
        ));
        let bad = write(dir.path(), "bad.txt", "0.1\nabc\n");
        assert!(matches!(load_ecg(&bad, 250.0), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn annotations() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "s.csv", "start,end,stage\n0,30,DS\n30,60,REM\n90,120,RS\n");
        let ann = load_stage_annotation(&p).unwrap();
        assert_eq!(ann.stage_at(0.0), Some(SleepStage::Ds));
        assert_eq!(ann.stage_at(30.0), Some(SleepStage::Rem));
        assert_eq!(ann.stage_at(75.0), None);
        assert_eq!(ann.stage_at(119.9), Some(SleepStage::Rs));
        assert_eq!(ann.stage_at(120.0), None);

        let p = write(dir.path(), "o.csv", "0,30,DS\n20,60,REM\n");
        assert!(matches!(
            load_stage_annotation(&p),
            Err(Error::InvalidAnnotation(_))
        ));
    }
}
