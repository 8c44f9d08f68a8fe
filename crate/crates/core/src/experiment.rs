//! Cross-validation, ablation and sleep-stage analysis.
//!
//! Everything here is deterministic for a fixed seed: fold plans come from a
//! ChaCha20 stream with a documented key layout, and parallel work is reduced in
//! fold/configuration order.

use std::fmt;
use std::str::FromStr;

use log::info;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{column_stage, is_age_normalized_column, FeatureKind, FeatureMatrix};
use crate::model::{
    metrics, tolerance_analysis, BayesianRidge, Metrics, Regressor, RidgeHyperparams, Standardizer,
    ToleranceBand, DEFAULT_BANDS_MMOL,
};
use crate::signal::SleepStage;
use crate::stats::{paired_t_test, pearson, pearson_pairwise, sample_sd, select_features, CorrelationResult, PairedTTest, SelectionReport};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_SEED: u64 = 42;

/// ChaCha20 keyed with the seed's 8 little-endian bytes followed by 24 zero
/// bytes; nonce and block counter start at zero.
pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha20Rng::from_seed(key)
}

/// Uniform integer in `0..bound` by rejection on 64-bit draws.
fn bounded(rng: &mut ChaCha20Rng, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    // 2^64 mod bound
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let r = rng.next_u64();
        if r >= threshold {
            return r % bound;
        }
    }
}

/// Fisher–Yates, drawing `j` in `0..=i` from the top index down.
fn shuffle<T>(rng: &mut ChaCha20Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = bounded(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    /// Fold index per row.
    pub assignments: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified k-fold plan for a continuous target.
///
/// Rows are sorted by target into `k` contiguous quantile bins, each bin is
/// shuffled, and rows are dealt to folds round-robin with one counter running
/// across all bins, so fold sizes differ by at most one.
pub fn stratified_kfold(target: &[f64], k: usize, seed: u64) -> Result<FoldPlan> {
    let n = target.len();
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need k >= 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::TooFew {
            what: "rows for the requested folds",
            needed: k,
            got: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| target[a].total_cmp(&target[b]).then(a.cmp(&b)));

    let mut rng = seeded_rng(seed);
    let mut assignments = vec![0; n];
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    let mut dealt = 0;
    for bin in 0..k {
        let size = base + usize::from(bin < extra);
        let members = &mut order[start..start + size];
        shuffle(&mut rng, members);
        for &row in members.iter() {
            assignments[row] = dealt % k;
            dealt += 1;
        }
        start += size;
    }
    Ok(FoldPlan {
        assignments,
        k,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// One selection on all rows before cross-validation.
    #[default]
    Global,
    /// Selection repeated on each fold's training rows.
    PerFold,
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMode::Global => "global",
            SelectionMode::PerFold => "per-fold",
        })
    }
}

impl FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(SelectionMode::Global),
            "per-fold" | "per_fold" => Ok(SelectionMode::PerFold),
            other => Err(Error::Config(format!("unknown selection mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub selection_mode: SelectionMode,
    pub p_threshold: f64,
    pub k_features: usize,
    pub hyper: RidgeHyperparams,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            selection_mode: SelectionMode::Global,
            p_threshold: 0.2,
            k_features: 15,
            hyper: RidgeHyperparams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Features used by the model after dropping zero-variance training columns.
    pub features: Vec<String>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub mean_r2: f64,
    pub sd_r2: Option<f64>,
    pub mean_mae: f64,
    pub sd_mae: Option<f64>,
    /// sd(r2) / mean(r2) x 100.
    pub cv_percent: Option<f64>,
    pub pooled_pearson_r: Option<f64>,
    pub pooled_pearson_p: Option<f64>,
}

impl CvSummary {
    pub fn from_folds(per_fold: &[FoldResult], pooled: Option<&CorrelationResult>) -> Self {
        let r2: Vec<f64> = per_fold.iter().map(|f| f.metrics.r2).collect();
        let mae: Vec<f64> = per_fold.iter().map(|f| f.metrics.mae).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let mean_r2 = mean(&r2);
        let sd_r2 = sample_sd(&r2);
        Self {
            mean_r2,
            sd_r2,
            mean_mae: mean(&mae),
            sd_mae: sample_sd(&mae),
            cv_percent: sd_r2.filter(|_| mean_r2 != 0.0).map(|sd| sd / mean_r2 * 100.0),
            pooled_pearson_r: pooled.map(|c| c.r),
            pooled_pearson_p: pooled.map(|c| c.p_value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model: String,
    pub selection_mode: SelectionMode,
    pub per_fold: Vec<FoldResult>,
    pub summary: CvSummary,
    pub tolerance: Vec<ToleranceBand>,
    /// Out-of-fold predictions in row order.
    pub predictions: Vec<f64>,
    pub fold_of_row: Vec<usize>,
}

impl CvReport {
    pub fn r2_per_fold(&self) -> Vec<f64> {
        self.per_fold.iter().map(|f| f.metrics.r2).collect()
    }

    /// Largest feature count used in any fold.
    pub fn feature_count(&self) -> usize {
        self.per_fold.iter().map(|f| f.features.len()).max().unwrap_or(0)
    }
}

pub fn run_cv(m: &FeatureMatrix, plan: &FoldPlan, opts: &CvOptions) -> Result<CvReport> {
    run_cv_with(m, plan, opts, &BayesianRidge::new(opts.hyper))
}

/// Cross-validates `regressor` on `m` under `plan`.
pub fn run_cv_with(
    m: &FeatureMatrix,
    plan: &FoldPlan,
    opts: &CvOptions,
    regressor: &dyn Regressor,
) -> Result<CvReport> {
    if plan.assignments.len() != m.n_rows() {
        return Err(Error::LengthMismatch {
            left: plan.assignments.len(),
            right: m.n_rows(),
        });
    }
    for (fold, &size) in plan.fold_sizes().iter().enumerate() {
        if size < 2 {
            return Err(Error::FoldTooSmall { fold, size });
        }
    }
    let all_rows: Vec<usize> = (0..m.n_rows()).collect();
    let global = match opts.selection_mode {
        SelectionMode::Global => Some(select_features(m, &all_rows, opts.p_threshold, opts.k_features)?),
        SelectionMode::PerFold => None,
    };

    let folds: Vec<(FoldResult, Vec<(usize, f64)>)> = (0..plan.k)
        .into_par_iter()
        .map(|fold| {
            let train = plan.train_rows(fold);
            let test = plan.test_rows(fold);
            let selected = match &global {
                Some(sel) => sel.selected.clone(),
                None => select_features(m, &train, opts.p_threshold, opts.k_features)?.selected,
            };
            if selected.is_empty() {
                return Err(Error::EmptySelection(format!(" in fold {fold}")));
            }
            let (standardizer, _) = Standardizer::fit(m, &train, &selected)?;
            if standardizer.names.is_empty() {
                return Err(Error::EmptySelection(format!(
                    " with training variance in fold {fold}"
                )));
            }
            let x_train = standardizer.transform(m, &train)?;
            let x_test = standardizer.transform(m, &test)?;
            let y_train: Vec<f64> = train.iter().map(|&r| m.target()[r]).collect();
            let y_test: Vec<f64> = test.iter().map(|&r| m.target()[r]).collect();
            let pred = regressor.fit_predict(&x_train, &y_train, &x_test)?;
            let fold_metrics = metrics(&y_test, &pred)?;
            Ok((
                FoldResult {
                    fold,
                    n_train: train.len(),
                    n_test: test.len(),
                    features: standardizer.names,
                    metrics: fold_metrics,
                },
                test.into_iter().zip(pred).collect(),
            ))
        })
        .collect::<Result<_>>()?;

    let mut predictions = vec![f64::NAN; m.n_rows()];
    let mut per_fold = Vec::with_capacity(plan.k);
    for (result, preds) in folds {
        for (row, p) in preds {
            predictions[row] = p;
        }
        per_fold.push(result);
    }
    let pooled = pearson(m.target(), &predictions).ok();
    let summary = CvSummary::from_folds(&per_fold, pooled.as_ref());
    let tolerance = tolerance_analysis(m.target(), &predictions, &DEFAULT_BANDS_MMOL)?;
    Ok(CvReport {
        model: regressor.name().to_string(),
        selection_mode: opts.selection_mode,
        per_fold,
        summary,
        tolerance,
        predictions,
        fold_of_row: plan.assignments.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AblationConfig {
    Full,
    NoAgeNorm,
    NoSleepHrv,
    EcgOnly,
    ClinicalOnly,
}

impl AblationConfig {
    pub const ALL: [AblationConfig; 5] = [
        AblationConfig::Full,
        AblationConfig::NoAgeNorm,
        AblationConfig::NoSleepHrv,
        AblationConfig::EcgOnly,
        AblationConfig::ClinicalOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationConfig::Full => "Full",
            AblationConfig::NoAgeNorm => "NoAgeNorm",
            AblationConfig::NoSleepHrv => "NoSleepHrv",
            AblationConfig::EcgOnly => "EcgOnly",
            AblationConfig::ClinicalOnly => "ClinicalOnly",
        }
    }

    /// Whether `column` belongs to this configuration's candidate pool.
    pub fn admits(self, column: &str) -> bool {
        let kind = FeatureKind::of(column);
        match self {
            AblationConfig::Full => true,
            // raw mean-RR columns stay in the pool in place of the normalized ones
            AblationConfig::NoAgeNorm => !is_age_normalized_column(column),
            AblationConfig::NoSleepHrv => kind != FeatureKind::StageHrv,
            AblationConfig::EcgOnly => kind != FeatureKind::Clinical,
            AblationConfig::ClinicalOnly => kind == FeatureKind::Clinical,
        }
    }
}

impl fmt::Display for AblationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationConfig::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown ablation configuration `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: AblationConfig,
    pub pool_size: usize,
    pub features: usize,
    pub r2: f64,
    pub r2_sd: Option<f64>,
    pub mae: f64,
    /// r2(config) - r2(Full); `None` when Full was not run.
    pub delta_r2: Option<f64>,
    pub report: CvReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn get(&self, config: AblationConfig) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.config == config)
    }
}

/// Runs cross-validation for each configuration on its restricted pool.
/// Rows come back in `configs` order with duplicates removed.
pub fn run_ablation(
    m: &FeatureMatrix,
    plan: &FoldPlan,
    opts: &CvOptions,
    configs: &[AblationConfig],
) -> Result<AblationReport> {
    let mut wanted: Vec<AblationConfig> = Vec::new();
    for c in configs {
        if !wanted.contains(c) {
            wanted.push(*c);
        }
    }
    let runs: Vec<(AblationConfig, usize, CvReport)> = wanted
        .par_iter()
        .map(|&config| {
            let pool = m.filter_columns(|c| config.admits(c));
            if pool.n_cols() == 0 {
                return Err(Error::EmptyPool(config.name().into()));
            }
            info!("ablation {config}: {} candidate columns", pool.n_cols());
            let report = run_cv(&pool, plan, opts)?;
            Ok((config, pool.n_cols(), report))
        })
        .collect::<Result<_>>()?;

    let full_r2 = runs
        .iter()
        .find(|(c, _, _)| *c == AblationConfig::Full)
        .map(|(_, _, r)| r.summary.mean_r2);
    let rows = runs
        .into_iter()
        .map(|(config, pool_size, report)| AblationRow {
            config,
            pool_size,
            features: report.feature_count(),
            r2: report.summary.mean_r2,
            r2_sd: report.summary.sd_r2,
            mae: report.summary.mean_mae,
            delta_r2: full_r2.map(|f| report.summary.mean_r2 - f),
            report,
        })
        .collect();
    Ok(AblationReport { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: SleepStage,
    pub correlations: Vec<CorrelationResult>,
    pub mean_abs_r: f64,
    /// `None` for a single column.
    pub sd_abs_r: Option<f64>,
    pub min_abs_r: f64,
    pub max_abs_r: f64,
}

/// Per stage, |r| of every stage-tagged HRV column against the target.
pub fn sleep_stage_analysis(m: &FeatureMatrix) -> Result<Vec<StageSummary>> {
    SleepStage::ALL
        .into_iter()
        .map(|stage| {
            let correlations: Vec<CorrelationResult> = m
                .columns()
                .filter(|(name, _)| column_stage(name) == Some(stage))
                .filter_map(|(name, col)| {
                    pearson_pairwise(col, m.target()).ok().map(|mut c| {
                        c.feature = name.to_string();
                        c
                    })
                })
                .collect();
            if correlations.is_empty() {
                return Err(Error::Empty(format!("no usable HRV columns for stage {stage}")));
            }
            let abs: Vec<f64> = correlations.iter().map(|c| c.r.abs()).collect();
            Ok(StageSummary {
                stage,
                mean_abs_r: abs.iter().sum::<f64>() / abs.len() as f64,
                sd_abs_r: sample_sd(&abs),
                min_abs_r: abs.iter().copied().fold(f64::INFINITY, f64::min),
                max_abs_r: abs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                correlations,
            })
        })
        .collect()
}

/// Paired t-test on per-fold r2 of two reports built from the same fold plan.
pub fn compare_models(a: &CvReport, b: &CvReport) -> Result<PairedTTest> {
    if a.per_fold.len() != b.per_fold.len() {
        return Err(Error::LengthMismatch {
            left: a.per_fold.len(),
            right: b.per_fold.len(),
        });
    }
    if a.fold_of_row != b.fold_of_row {
        return Err(Error::InvalidParameter(
            "reports were produced from different fold plans".into(),
        ));
    }
    paired_t_test(&a.r2_per_fold(), &b.r2_per_fold()).map_err(|e| match e {
        Error::ZeroVariance(_) => Error::Indistinguishable,
        other => other,
    })
}

/// Cross-validates each regressor on the same plan and selection.
pub fn compare_regressors(
    m: &FeatureMatrix,
    plan: &FoldPlan,
    opts: &CvOptions,
    regressors: &[&dyn Regressor],
) -> Result<Vec<CvReport>> {
    regressors
        .par_iter()
        .map(|r| run_cv_with(m, plan, opts, *r))
        .collect()
}

/// Selection over all rows, as reported in the ranked feature table.
pub fn cohort_selection(m: &FeatureMatrix, opts: &CvOptions) -> Result<SelectionReport> {
    let rows: Vec<usize> = (0..m.n_rows()).collect();
    select_features(m, &rows, opts.p_threshold, opts.k_features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{synthetic_matrix, SyntheticSpec};
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    #[test]
    fn chacha_key_layout_matches_rfc_vector() {
        // RFC 7539 test vector: the all-zero key and nonce keystream begins 76 b8 e0 ad
        let mut rng = seeded_rng(0);
        assert_eq!(rng.next_u32(), 0xade0_b876);
    }

    #[test]
    fn fold_sizes_for_43() {
        let target: Vec<f64> = (0..43).map(|i| (i as f64 * 1.37).sin()).collect();
        let plan = stratified_kfold(&target, 5, 42).unwrap();
        let mut sizes = plan.fold_sizes();
        assert_eq!(sizes, vec![9, 9, 9, 8, 8]);
        sizes.sort();
        assert_eq!(sizes, vec![8, 8, 9, 9, 9]);
        assert_eq!(plan, stratified_kfold(&target, 5, 42).unwrap());
        assert_ne!(plan, stratified_kfold(&target, 5, 7).unwrap());
    }

    #[test]
    fn kfold_errors() {
        assert!(stratified_kfold(&[1.0, 2.0, 3.0], 5, 42).is_err());
        assert!(stratified_kfold(&[1.0, 2.0, 3.0], 1, 42).is_err());
    }

    #[test]
    fn bounded_draws_cover_range() {
        let mut rng = seeded_rng(3);
        let mut seen = [0usize; 7];
        for _ in 0..7000 {
            seen[bounded(&mut rng, 7) as usize] += 1;
        }
        assert!(seen.iter().all(|&c| c > 850 && c < 1150), "{seen:?}");
    }

    #[test]
    fn folds_balance_the_target() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for trial in 0..100u64 {
            let target: Vec<f64> = (0..43).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let plan = stratified_kfold(&target, 5, trial).unwrap();
            let mean = target.iter().sum::<f64>() / 43.0;
            let sd = sample_sd(&target).unwrap();
            for f in 0..5 {
                let rows = plan.test_rows(f);
                let fm = rows.iter().map(|&r| target[r]).sum::<f64>() / rows.len() as f64;
                assert!((fm - mean).abs() <= 0.5 * sd, "trial {trial} fold {f}");
            }
        }
    }

    #[test]
    fn recoverable_signal() {
        let n = 43;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let noise: Vec<Option<f64>> = (0..n).map(|_| Some(rng.random_range(0.0..1.0))).collect();
        let m = FeatureMatrix::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            vec!["hrv_ds_mean_rr".into(), "dbp".into()],
            vec![x.iter().map(|v| Some(*v)).collect(), noise],
            x.clone(),
        )
        .unwrap();
        let plan = stratified_kfold(m.target(), 5, 42).unwrap();
        let rep = run_cv(&m, &plan, &CvOptions::default()).unwrap();
        assert!(rep.summary.mean_r2 > 0.99, "{}", rep.summary.mean_r2);
    }

    #[test]
    fn summary_recomputes_from_folds() {
        let m = synthetic_matrix(&SyntheticSpec::default(), 42);
        let plan = stratified_kfold(m.target(), 5, 42).unwrap();
        let rep = run_cv(&m, &plan, &CvOptions::default()).unwrap();
        let r2 = rep.r2_per_fold();
        let mean = r2.iter().sum::<f64>() / 5.0;
        assert!((mean - rep.summary.mean_r2).abs() <= 1e-12);
        let sd = (r2.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((sd - rep.summary.sd_r2.unwrap()).abs() <= 1e-12);
        assert!((rep.summary.cv_percent.unwrap() - sd / mean * 100.0).abs() <= 1e-9);
        assert_eq!(rep.per_fold.len(), 5);
        assert!(rep.predictions.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn per_fold_selection_ignores_test_rows() {
        let m = synthetic_matrix(&SyntheticSpec::default(), 42);
        let plan = stratified_kfold(m.target(), 5, 42).unwrap();
        let opts = CvOptions {
            selection_mode: SelectionMode::PerFold,
            ..CvOptions::default()
        };
        let base = run_cv(&m, &plan, &opts).unwrap();

        // scramble every feature value in fold 0's test rows
        let test0 = plan.test_rows(0);
        let train0 = plan.train_rows(0);
        let cols: Vec<Vec<Option<f64>>> = m
            .columns()
            .map(|(_, c)| {
                let mut c = c.to_vec();
                for &r in &test0 {
                    c[r] = c[r].map(|v| v * -3.0 + 100.0);
                }
                c
            })
            .collect();
        let mutated =
            FeatureMatrix::new(m.subject_ids().to_vec(), m.names().to_vec(), cols, m.target().to_vec()).unwrap();
        let sel = |mat: &FeatureMatrix| select_features(mat, &train0, opts.p_threshold, opts.k_features).unwrap();
        assert_eq!(sel(&m), sel(&mutated));
        let features = &base.per_fold[0].features;
        let (s1, _) = Standardizer::fit(&m, &train0, features).unwrap();
        let (s2, _) = Standardizer::fit(&mutated, &train0, features).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(&sel(&m).selected, features);
    }

    #[test]
    fn ablation_pools() {
        use AblationConfig::*;
        assert!(Full.admits("hrv_rem_mean_rr_age_normalized"));
        assert!(!NoAgeNorm.admits("hrv_rem_mean_rr_age_normalized"));
        assert!(NoAgeNorm.admits("hrv_rem_mean_rr"));
        assert!(!NoSleepHrv.admits("hrv_ds_rmssd"));
        assert!(NoSleepHrv.admits("ecg_rmssd"));
        assert!(EcgOnly.admits("hrv_ds_mean_rr_age_normalized"));
        assert!(EcgOnly.admits("ecg_sdnn"));
        assert!(!EcgOnly.admits("dbp"));
        assert!(ClinicalOnly.admits("psqi_age"));
        assert!(!ClinicalOnly.admits("ecg_mean_rr"));
        assert_eq!("clinicalonly".parse::<AblationConfig>().unwrap(), ClinicalOnly);
    }

    #[test]
    fn ablation_full_matches_run_cv() {
        let m = synthetic_matrix(&SyntheticSpec::default(), 42);
        let plan = stratified_kfold(m.target(), 5, 42).unwrap();
        let opts = CvOptions::default();
        let rep = run_ablation(&m, &plan, &opts, &[AblationConfig::Full, AblationConfig::EcgOnly]).unwrap();
        assert_eq!(rep.rows.len(), 2);
        let direct = run_cv(&m, &plan, &opts).unwrap();
        assert_eq!(rep.get(AblationConfig::Full).unwrap().report, direct);
        assert_eq!(rep.get(AblationConfig::Full).unwrap().delta_r2, Some(0.0));
    }

    #[test]
    fn compare_models_cases() {
        let m = synthetic_matrix(&SyntheticSpec::default(), 42);
        let plan = stratified_kfold(m.target(), 5, 42).unwrap();
        let a = run_cv(&m, &plan, &CvOptions::default()).unwrap();
        assert!(matches!(compare_models(&a, &a), Err(Error::Indistinguishable)));

        let mut b = a.clone();
        let uplift = [0.03, 0.025, 0.035, 0.03, 0.028];
        for (f, u) in b.per_fold.iter_mut().zip(uplift) {
            f.metrics.r2 += u;
        }
        let t = compare_models(&b, &a).unwrap();
        assert!(t.p_value < 0.01, "{t:?}");
        assert!(t.t > 0.0);
    }

    #[test]
    fn stage_summary_single_column() {
        let m = FeatureMatrix::new(
            (0..5).map(|i| format!("s{i}")).collect(),
            vec!["hrv_ds_mean_rr".into(), "hrv_rem_mean_rr".into(), "hrv_rs_mean_rr".into()],
            vec![
                vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0), Some(5.0)],
                vec![Some(2.0), Some(1.0), Some(4.0), Some(3.0), Some(5.0)],
                vec![Some(5.0), Some(3.0), Some(4.0), Some(1.0), Some(2.0)],
            ],
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
        )
        .unwrap();
        let s = sleep_stage_analysis(&m).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|st| st.sd_abs_r.is_none()));
        assert_eq!(s[0].min_abs_r, s[0].max_abs_r);
        assert!((s[1].mean_abs_r - 0.8).abs() < 1e-12);
    }
}
