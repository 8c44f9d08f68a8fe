//! End-to-end runs driven by a TOML configuration.
//!
//! Relative paths in a config file resolve against the file's directory. Every
//! output carries the seed and the full configuration, and nothing
//! time-dependent is written, so reruns are byte-identical.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{
    cohort_selection, compare_models, compare_regressors, run_ablation, run_cv, sleep_stage_analysis,
    stratified_kfold, AblationConfig, AblationReport, CvOptions, CvReport, FoldPlan, SelectionMode,
    StageSummary, DEFAULT_FOLDS, DEFAULT_SEED,
};
use crate::features::{
    back_transform, build_feature_matrix, AgeNormParams, FeatureMatrix, FeatureOptions, SubjectSeries,
};
use crate::ingest::{
    load_clinical_table, load_ecg, load_rr_series, load_stage_annotation, resolve, SubjectRecord, DEFAULT_FS_HZ,
};
use crate::model::{BayesianRidge, FixedRidge, ModelFit, OrdinaryLeastSquares, Regressor, RidgeHyperparams};
use crate::signal::{
    detect_r_peaks_with, peaks_to_rr, remove_artifacts, segment_by_stage, validate_amplitude, QrsParams,
    SleepStage, DEFAULT_ARTIFACT_WINDOW,
};
use crate::stats::{PairedTTest, SelectionReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Clinical table with signal file references.
    pub clinical_table: Option<PathBuf>,
    /// Precomputed feature matrix; skips extraction when set.
    pub feature_matrix: Option<PathBuf>,
    pub sampling_rate_hz: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            clinical_table: None,
            feature_matrix: None,
            sampling_rate_hz: DEFAULT_FS_HZ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub artifact_window: usize,
    pub qrs: QrsParams,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            artifact_window: DEFAULT_ARTIFACT_WINDOW,
            qrs: QrsParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub p_threshold: f64,
    pub k: usize,
    pub mode: SelectionMode,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        let cv = CvOptions::default();
        Self {
            p_threshold: cv.p_threshold,
            k: cv.k_features,
            mode: cv.selection_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    /// Configurations run by `run` and, unless overridden, `ablate`.
    pub ablations: Vec<AblationConfig>,
    /// Fixed penalty of the plain ridge baseline.
    pub ridge_penalty: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: DEFAULT_FOLDS,
            ablations: AblationConfig::ALL.to_vec(),
            ridge_penalty: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; `None` uses the rayon default. Not part of provenance,
    /// since results do not depend on it.
    #[serde(skip_serializing)]
    pub jobs: Option<usize>,
    pub data: DataConfig,
    pub signal: SignalConfig,
    pub age_normalization: AgeNormParams,
    pub features: FeatureOptions,
    pub selection: SelectionConfig,
    pub model: RidgeHyperparams,
    pub cv: CvConfig,
    /// Not part of provenance, so relocated reruns stay byte-identical.
    #[serde(skip_serializing)]
    pub output: OutputConfig,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            jobs: None,
            data: DataConfig::default(),
            signal: SignalConfig::default(),
            age_normalization: AgeNormParams::default(),
            features: FeatureOptions::default(),
            selection: SelectionConfig::default(),
            model: RidgeHyperparams::default(),
            cv: CvConfig::default(),
            output: OutputConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.clinical_table.is_none() && self.data.feature_matrix.is_none() {
            return Err(Error::Config(
                "set data.clinical_table or data.feature_matrix".into(),
            ));
        }
        if !(self.data.sampling_rate_hz.is_finite() && self.data.sampling_rate_hz > 0.0) {
            return Err(Error::InvalidSamplingRate(self.data.sampling_rate_hz));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be >= 1".into()));
        }
        if self.selection.k == 0 {
            return Err(Error::Config("selection.k must be >= 1".into()));
        }
        self.age_normalization.validate()?;
        self.model.validate()
    }

    /// Fails when a configured input file is missing.
    pub fn check_inputs(&self) -> Result<()> {
        for p in [&self.data.clinical_table, &self.data.feature_matrix].into_iter().flatten() {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(Error::io(
                    &full,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    pub fn cv_options(&self) -> CvOptions {
        CvOptions {
            selection_mode: self.selection.mode,
            p_threshold: self.selection.p_threshold,
            k_features: self.selection.k,
            hyper: self.model,
        }
    }

    /// Comment lines identifying the run.
    pub fn provenance(&self) -> Vec<String> {
        vec![
            format!("hrv-glucose {}", env!("CARGO_PKG_VERSION")),
            format!("seed: {}", self.seed),
            format!(
                "config: {}",
                serde_json::to_string(self).expect("config serializes")
            ),
        ]
    }
}

/// Runs `f` on a pool of `jobs` threads, or the global pool when `None`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f),
    }
}

/// Per-subject extraction bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcRow {
    pub subject_id: String,
    /// `ecg` or `rr`.
    pub source: String,
    pub ecg_max_abs_mv: Option<f64>,
    pub r_peaks: Option<usize>,
    pub intervals: usize,
    pub out_of_range: usize,
    pub artifacts_removed: usize,
    pub ds: usize,
    pub rem: usize,
    pub rs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub matrix: FeatureMatrix,
    pub qc: Vec<QcRow>,
}

fn process_subject(cfg: &RunConfig, base: &Path, subject: &SubjectRecord) -> Result<(SubjectSeries, QcRow)> {
    let signal = resolve(base, &subject.signal);
    let annotation = match &signal.stages_file {
        Some(p) => load_stage_annotation(p)?,
        None => Default::default(),
    };
    let mut qc = QcRow {
        subject_id: subject.subject_id.clone(),
        source: String::new(),
        ecg_max_abs_mv: None,
        r_peaks: None,
        intervals: 0,
        out_of_range: 0,
        artifacts_removed: 0,
        ds: 0,
        rem: 0,
        rs: 0,
    };
    let rr = if let Some(ecg_path) = &signal.ecg_file {
        qc.source = "ecg".into();
        let ecg = load_ecg(ecg_path, cfg.data.sampling_rate_hz)?;
        qc.ecg_max_abs_mv = Some(validate_amplitude(&ecg)?.max_abs_mv);
        let peaks = detect_r_peaks_with(&ecg, &cfg.signal.qrs)?;
        qc.r_peaks = Some(peaks.len());
        peaks_to_rr(&peaks, ecg.fs())?
    } else if let Some(rr_path) = &signal.rr_file {
        qc.source = "rr".into();
        let loaded = load_rr_series(rr_path)?;
        qc.out_of_range = loaded.out_of_range.len();
        let flagged = loaded.out_of_range;
        loaded.series.retain_indices(|i| flagged.binary_search(&i).is_err())
    } else {
        return Err(Error::Config("no rr_file or ecg_file given".into()));
    };
    qc.intervals = rr.len();
    let clean = remove_artifacts(&rr, cfg.signal.artifact_window)?;
    qc.artifacts_removed = rr.len() - clean.len();
    let stages = segment_by_stage(&clean, &annotation);
    let count = |s: SleepStage| stages.get(&s).map_or(0, |r| r.len());
    qc.ds = count(SleepStage::Ds);
    qc.rem = count(SleepStage::Rem);
    qc.rs = count(SleepStage::Rs);
    Ok((
        SubjectSeries {
            recording: Some(clean),
            stages,
        },
        qc,
    ))
}

/// Loads the cohort, processes every subject's signal and builds the feature matrix.
pub fn extract_features(cfg: &RunConfig) -> Result<Extraction> {
    let table = cfg
        .data
        .clinical_table
        .as_ref()
        .ok_or_else(|| Error::Config("data.clinical_table is required for extraction".into()))?;
    let table = cfg.resolve(table);
    let cohort = load_clinical_table(&table)?;
    let base = table.parent().map(Path::to_path_buf).unwrap_or_default();
    info!("extracting features for {} subjects", cohort.len());
    let processed: Vec<(SubjectSeries, QcRow)> = cohort
        .subjects()
        .par_iter()
        .map(|s| process_subject(cfg, &base, s).map_err(|e| e.for_subject(&s.subject_id)))
        .collect::<Result<_>>()?;
    let (series, qc): (Vec<_>, Vec<_>) = processed.into_iter().unzip();
    let matrix = build_feature_matrix(&cohort, &series, &cfg.age_normalization, &cfg.features)?;
    Ok(Extraction { matrix, qc })
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_table(path: &Path, preamble: &[String], header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut out = String::new();
    for line in preamble {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::csv(path, e))?;
    }
    let body = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    out.push_str(&String::from_utf8_lossy(&body));
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn prepare_output(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.check_inputs()?;
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write_qc(path: &Path, preamble: &[String], qc: &[QcRow]) -> Result<()> {
    let header = [
        "subject_id",
        "source",
        "ecg_max_abs_mv",
        "r_peaks",
        "intervals",
        "out_of_range",
        "artifacts_removed",
        "ds_intervals",
        "rem_intervals",
        "rs_intervals",
    ];
    let rows = qc
        .iter()
        .map(|q| {
            vec![
                q.subject_id.clone(),
                q.source.clone(),
                opt(q.ecg_max_abs_mv),
                q.r_peaks.map(|v| v.to_string()).unwrap_or_default(),
                q.intervals.to_string(),
                q.out_of_range.to_string(),
                q.artifacts_removed.to_string(),
                q.ds.to_string(),
                q.rem.to_string(),
                q.rs.to_string(),
            ]
        })
        .collect();
    write_table(path, preamble, &header, rows)
}

/// `extract-features`: writes `features.csv` and `qc.csv`.
pub fn cmd_extract_features(cfg: &RunConfig) -> Result<Extraction> {
    with_jobs(cfg.jobs, || {
        let out = prepare_output(cfg)?;
        let ex = extract_features(cfg)?;
        let pre = cfg.provenance();
        ex.matrix.write_csv(out.join("features.csv"), &pre)?;
        write_qc(&out.join("qc.csv"), &pre, &ex.qc)?;
        Ok(ex)
    })
}

fn load_or_extract(cfg: &RunConfig, out: &Path) -> Result<FeatureMatrix> {
    if let Some(p) = &cfg.data.feature_matrix {
        return FeatureMatrix::read_csv(cfg.resolve(p));
    }
    let ex = extract_features(cfg)?;
    let pre = cfg.provenance();
    ex.matrix.write_csv(out.join("features.csv"), &pre)?;
    write_qc(&out.join("qc.csv"), &pre, &ex.qc)?;
    Ok(ex.matrix)
}

/// Outcome of the Full vs NoAgeNorm paired comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Comparison {
    Tested(PairedTTest),
    /// Per-fold differences are all equal, so no test is defined.
    Indistinguishable,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub config: RunConfig,
    pub n_subjects: usize,
    pub n_features: usize,
    pub fold_sizes: Vec<usize>,
    pub selection: SelectionReport,
    /// Cross-validation in the configured selection mode.
    pub cv: CvReport,
    /// The other selection mode, when it could be run.
    pub cv_alternate: Option<CvReport>,
    pub ablation: AblationReport,
    pub full_vs_no_age_norm: Comparison,
    pub sleep_stages: Option<Vec<StageSummary>>,
    pub model_comparison: Vec<CvReport>,
    pub final_model_features: Vec<String>,
}

impl RunSummary {
    /// Short plain-text digest for the terminal.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let line = |s: &mut String, t: String| {
            s.push_str(&t);
            s.push('\n');
        };
        let sd = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into());
        line(
            &mut s,
            format!(
                "subjects {}  features {}  folds {:?}  seed {}",
                self.n_subjects, self.n_features, self.fold_sizes, self.seed
            ),
        );
        line(&mut s, format!("selected: {}", self.selection.selected.join(", ")));
        for rep in std::iter::once(&self.cv).chain(self.cv_alternate.as_ref()) {
            let m = &rep.summary;
            line(
                &mut s,
                format!(
                    "cv {:<9} R2 {:.3} +/- {}  MAE {:.4} +/- {}  pooled r {}",
                    rep.selection_mode.to_string(),
                    m.mean_r2,
                    sd(m.sd_r2),
                    m.mean_mae,
                    sd(m.sd_mae),
                    sd(m.pooled_pearson_r)
                ),
            );
        }
        for row in &self.ablation.rows {
            line(
                &mut s,
                format!(
                    "ablation {:<13} R2 {:.3} +/- {}  features {:>2}  dR2 {}",
                    row.config.name(),
                    row.r2,
                    sd(row.r2_sd),
                    row.features,
                    sd(row.delta_r2)
                ),
            );
        }
        match &self.full_vs_no_age_norm {
            Comparison::Tested(t) => line(
                &mut s,
                format!("Full vs NoAgeNorm: t {:.3}  p {:.4}", t.t, t.p_value),
            ),
            Comparison::Indistinguishable => line(&mut s, "Full vs NoAgeNorm: indistinguishable".into()),
            Comparison::NotRun => {}
        }
        for rep in &self.model_comparison {
            line(
                &mut s,
                format!("model {:<14} R2 {:.3}  MAE {:.4}", rep.model, rep.summary.mean_r2, rep.summary.mean_mae),
            );
        }
        let bands: Vec<String> = self
            .cv
            .tolerance
            .iter()
            .map(|b| format!("+/-{} mmol/L {:.1}%", b.band_mmol_l, 100.0 * b.fraction))
            .collect();
        line(&mut s, format!("tolerance: {}", bands.join(", ")));
        s
    }
}

fn cv_fold_rows(reports: &[&CvReport]) -> Vec<Vec<String>> {
    reports
        .iter()
        .flat_map(|rep| {
            rep.per_fold.iter().map(move |f| {
                vec![
                    rep.model.clone(),
                    rep.selection_mode.to_string(),
                    f.fold.to_string(),
                    f.n_train.to_string(),
                    f.n_test.to_string(),
                    f.features.len().to_string(),
                    f.metrics.r2.to_string(),
                    f.metrics.mae.to_string(),
                    opt(f.metrics.pearson_r),
                    opt(f.metrics.pearson_p),
                ]
            })
        })
        .collect()
}

fn write_ablation(path: &Path, preamble: &[String], report: &AblationReport) -> Result<()> {
    let rows = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.config.name().to_string(),
                r.pool_size.to_string(),
                r.features.to_string(),
                r.r2.to_string(),
                opt(r.r2_sd),
                r.mae.to_string(),
                opt(r.delta_r2),
            ]
        })
        .collect();
    write_table(
        path,
        preamble,
        &["configuration", "pool_size", "features", "r2_mean", "r2_sd", "mae_mean", "delta_r2"],
        rows,
    )
}

/// Alternative-mode CV; failures are logged rather than fatal.
fn alternate_cv(m: &FeatureMatrix, plan: &FoldPlan, opts: &CvOptions) -> Option<CvReport> {
    let mode = match opts.selection_mode {
        SelectionMode::Global => SelectionMode::PerFold,
        SelectionMode::PerFold => SelectionMode::Global,
    };
    let alt = CvOptions {
        selection_mode: mode,
        ..opts.clone()
    };
    run_cv(m, plan, &alt)
        .map_err(|e| warn!("{mode} cross-validation skipped: {e}"))
        .ok()
}

/// `run`: full experiment with all tables written to the output directory.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary> {
    with_jobs(cfg.jobs, || {
        let out = prepare_output(cfg)?;
        let m = load_or_extract(cfg, &out)?;
        let opts = cfg.cv_options();
        let plan = stratified_kfold(m.target(), cfg.cv.folds, cfg.seed)?;
        info!("fold sizes {:?}", plan.fold_sizes());
        let selection = cohort_selection(&m, &opts)?;
        let cv = run_cv(&m, &plan, &opts)?;
        let cv_alternate = alternate_cv(&m, &plan, &opts);
        let ablation = run_ablation(&m, &plan, &opts, &cfg.cv.ablations)?;
        let full_vs_no_age_norm = match (
            ablation.get(AblationConfig::Full),
            ablation.get(AblationConfig::NoAgeNorm),
        ) {
            (Some(full), Some(plain)) => match compare_models(&full.report, &plain.report) {
                Ok(t) => Comparison::Tested(t),
                Err(Error::Indistinguishable) => Comparison::Indistinguishable,
                Err(e) => return Err(e),
            },
            _ => Comparison::NotRun,
        };
        let sleep_stages = sleep_stage_analysis(&m)
            .map_err(|e| warn!("sleep-stage analysis skipped: {e}"))
            .ok();
        let bayes = BayesianRidge::new(cfg.model);
        let ridge = FixedRidge {
            penalty: cfg.cv.ridge_penalty,
        };
        let regressors: [&dyn Regressor; 3] = [&bayes, &OrdinaryLeastSquares, &ridge];
        let model_comparison = compare_regressors(&m, &plan, &opts, &regressors)?;

        let all_rows: Vec<usize> = (0..m.n_rows()).collect();
        if selection.selected.is_empty() {
            return Err(Error::EmptySelection(" on the full cohort".into()));
        }
        let final_model = ModelFit::train(&m, &all_rows, &selection.selected, &cfg.model)?;

        let summary = RunSummary {
            seed: cfg.seed,
            config: cfg.clone(),
            n_subjects: m.n_rows(),
            n_features: m.n_cols(),
            fold_sizes: plan.fold_sizes(),
            selection,
            cv,
            cv_alternate,
            ablation,
            full_vs_no_age_norm,
            sleep_stages,
            model_comparison,
            final_model_features: final_model.feature_names.clone(),
        };
        write_run_outputs(&out, cfg, &m, &summary)?;
        final_model.save(out.join("model_fit.json"))?;
        Ok(summary)
    })
}

fn write_run_outputs(out: &Path, cfg: &RunConfig, m: &FeatureMatrix, s: &RunSummary) -> Result<()> {
    let pre = cfg.provenance();

    let rows = s
        .selection
        .ranked
        .iter()
        .enumerate()
        .map(|(i, c)| {
            vec![
                (i + 1).to_string(),
                c.feature.clone(),
                c.r.to_string(),
                c.p_value.to_string(),
                c.n.to_string(),
                s.selection.is_selected(&c.feature).to_string(),
            ]
        })
        .collect();
    write_table(
        &out.join("selection.csv"),
        &pre,
        &["rank", "feature", "r", "p_value", "n", "selected"],
        rows,
    )?;

    let mut reports: Vec<&CvReport> = vec![&s.cv];
    reports.extend(s.cv_alternate.as_ref());
    write_table(
        &out.join("cv_folds.csv"),
        &pre,
        &[
            "model",
            "selection_mode",
            "fold",
            "n_train",
            "n_test",
            "features",
            "r2",
            "mae",
            "pearson_r",
            "pearson_p",
        ],
        cv_fold_rows(&reports),
    )?;

    let mut rows = Vec::new();
    for rep in &reports {
        for (i, id) in m.subject_ids().iter().enumerate() {
            let (t, p) = (m.target()[i], rep.predictions[i]);
            rows.push(vec![
                rep.selection_mode.to_string(),
                id.clone(),
                rep.fold_of_row[i].to_string(),
                t.to_string(),
                p.to_string(),
                back_transform(t).to_string(),
                back_transform(p).to_string(),
            ]);
        }
    }
    write_table(
        &out.join("predictions.csv"),
        &pre,
        &[
            "selection_mode",
            "subject_id",
            "fold",
            "log_glucose",
            "predicted_log_glucose",
            "glucose_mmol_L",
            "predicted_glucose_mmol_L",
        ],
        rows,
    )?;

    let rows = reports
        .iter()
        .flat_map(|rep| {
            rep.tolerance.iter().map(move |b| {
                vec![
                    rep.selection_mode.to_string(),
                    b.band_mmol_l.to_string(),
                    b.fraction.to_string(),
                ]
            })
        })
        .collect();
    write_table(
        &out.join("tolerance.csv"),
        &pre,
        &["selection_mode", "band_mmol_L", "fraction_within"],
        rows,
    )?;

    write_ablation(&out.join("ablation.csv"), &pre, &s.ablation)?;

    if let Some(stages) = &s.sleep_stages {
        let rows = stages
            .iter()
            .map(|st| {
                vec![
                    st.stage.token().to_string(),
                    st.correlations.len().to_string(),
                    st.mean_abs_r.to_string(),
                    opt(st.sd_abs_r),
                    st.min_abs_r.to_string(),
                    st.max_abs_r.to_string(),
                ]
            })
            .collect();
        write_table(
            &out.join("sleep_stages.csv"),
            &pre,
            &["stage", "columns", "mean_abs_r", "sd_abs_r", "min_abs_r", "max_abs_r"],
            rows,
        )?;
    }

    let rows = s
        .model_comparison
        .iter()
        .map(|rep| {
            vec![
                rep.model.clone(),
                rep.summary.mean_r2.to_string(),
                opt(rep.summary.sd_r2),
                rep.summary.mean_mae.to_string(),
                opt(rep.summary.pooled_pearson_r),
            ]
        })
        .collect();
    write_table(
        &out.join("model_comparison.csv"),
        &pre,
        &["model", "r2_mean", "r2_sd", "mae_mean", "pooled_pearson_r"],
        rows,
    )?;

    write_json(&out.join("summary.json"), s)?;
    std::fs::write(out.join("summary.txt"), s.render()).map_err(|e| Error::io(out.join("summary.txt"), e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct AblationOutput<'a> {
    seed: u64,
    config: &'a RunConfig,
    fold_sizes: Vec<usize>,
    report: &'a AblationReport,
}

/// `ablate`: runs the given configurations and writes `ablation.csv` and `ablation.json`.
pub fn cmd_ablate(cfg: &RunConfig, configs: &[AblationConfig]) -> Result<AblationReport> {
    with_jobs(cfg.jobs, || {
        let out = prepare_output(cfg)?;
        let m = load_or_extract(cfg, &out)?;
        let plan = stratified_kfold(m.target(), cfg.cv.folds, cfg.seed)?;
        let report = run_ablation(&m, &plan, &cfg.cv_options(), configs)?;
        write_ablation(&out.join("ablation.csv"), &cfg.provenance(), &report)?;
        write_json(
            &out.join("ablation.json"),
            &AblationOutput {
                seed: cfg.seed,
                config: cfg,
                fold_sizes: plan.fold_sizes(),
                report: &report,
            },
        )?;
        Ok(report)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{write_synthetic_cohort, CohortSpec};

    #[test]
    fn config_defaults_and_unknown_keys() {
        let cfg = RunConfig::from_toml_str("[data]\nclinical_table = \"c.csv\"\n", "/tmp/x").unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.cv.folds, 5);
        assert_eq!(cfg.selection.k, 15);
        assert_eq!(cfg.output_dir(), PathBuf::from("/tmp/x/results"));
        assert!(RunConfig::from_toml_str("[data]\nclinical_tabel = \"c.csv\"\n", ".").is_err());
        assert!(RunConfig::from_toml_str("seed = 1\n", ".").is_err());
        let cfg = RunConfig::from_toml_str(
            "[data]\nfeature_matrix = \"f.csv\"\n[selection]\nmode = \"per-fold\"\n[cv]\nablations = [\"Full\", \"EcgOnly\"]\n",
            ".",
        )
        .unwrap();
        assert_eq!(cfg.selection.mode, SelectionMode::PerFold);
        assert_eq!(cfg.cv.ablations, vec![AblationConfig::Full, AblationConfig::EcgOnly]);
    }

    #[test]
    fn extraction_on_small_cohort() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CohortSpec {
            n_subjects: 5,
            n_ecg: 1,
            ecg_stage_seconds: 20.0,
            fs: 250.0,
        };
        write_synthetic_cohort(dir.path(), &spec, 11).unwrap();
        let cfg = RunConfig::from_toml_str("[data]\nclinical_table = \"clinical.csv\"\n", dir.path()).unwrap();
        let ex = extract_features(&cfg).unwrap();
        assert_eq!(ex.matrix.n_rows(), 5);
        assert_eq!(ex.qc[4].source, "ecg");
        assert!(ex.qc[4].r_peaks.unwrap() > 20);
        assert!(ex.qc.iter().all(|q| q.ds > 0 && q.rem > 0 && q.rs > 0));
        assert!(ex.qc[..4].iter().all(|q| q.artifacts_removed >= 2));
        assert!(ex.matrix.column("hrv_rem_mean_rr_age_normalized").unwrap().iter().all(Option::is_some));
    }

    #[test]
    fn missing_signal_file_names_subject() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CohortSpec {
            n_subjects: 3,
            n_ecg: 0,
            ..CohortSpec::default()
        };
        write_synthetic_cohort(dir.path(), &spec, 1).unwrap();
        std::fs::remove_file(dir.path().join("rr/S002.csv")).unwrap();
        let cfg = RunConfig::from_toml_str("[data]\nclinical_table = \"clinical.csv\"\n", dir.path()).unwrap();
        let err = extract_features(&cfg).unwrap_err();
        assert!(matches!(&err, Error::Subject { id, .. } if id == "S002"), "{err}");
        assert!(err.to_string().contains("S002"));
    }
}
