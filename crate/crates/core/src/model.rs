//! Bayesian ridge regression by evidence maximization, reference regressors,
//! regression metrics and clinical tolerance bands.

use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{back_transform, FeatureMatrix};
use crate::stats::pearson;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Gamma hyperpriors on the noise precision (alpha) and weight precision (lambda).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RidgeHyperparams {
    pub alpha_1: f64,
    pub alpha_2: f64,
    pub lambda_1: f64,
    pub lambda_2: f64,
    pub max_iter: usize,
    /// Stop once the summed absolute weight change drops below this.
    pub tol: f64,
}

impl Default for RidgeHyperparams {
    fn default() -> Self {
        Self {
            alpha_1: 1e-6,
            alpha_2: 1e-6,
            lambda_1: 1e-6,
            lambda_2: 1e-6,
            max_iter: 300,
            tol: 1e-3,
        }
    }
}

impl RidgeHyperparams {
    pub fn validate(&self) -> Result<()> {
        let priors = [self.alpha_1, self.alpha_2, self.lambda_1, self.lambda_2];
        if priors.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(
                "Gamma prior parameters must all be > 0".into(),
            ));
        }
        if self.max_iter == 0 || self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidParameter(
                "max_iter must be >= 1 and tol > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Posterior of a Bayesian ridge fit on the matrix it was given.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub weights: DVector<f64>,
    pub intercept: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub covariance: DMatrix<f64>,
    pub n_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Precisions {
    Evidence,
    Fixed { alpha: f64, lambda: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesianRidge {
    pub hyper: RidgeHyperparams,
    precisions: Precisions,
}

impl BayesianRidge {
    pub fn new(hyper: RidgeHyperparams) -> Self {
        Self {
            hyper,
            precisions: Precisions::Evidence,
        }
    }

    /// Disables the precision updates and fits once at the given alpha and lambda.
    /// Used to check the posterior mean against closed-form ridge.
    pub fn with_fixed_precisions(alpha: f64, lambda: f64) -> Self {
        Self {
            hyper: RidgeHyperparams::default(),
            precisions: Precisions::Fixed { alpha, lambda },
        }
    }

    pub fn fit(&self, x: &DMatrix<f64>, y: &[f64]) -> Result<Posterior> {
        self.hyper.validate()?;
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(Error::LengthMismatch { left: n, right: y.len() });
        }
        if n < 2 || p < 1 {
            return Err(Error::TooFew {
                what: "rows (>= 2) and columns (>= 1) for a fit",
                needed: 2,
                got: n.min(p),
            });
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("regression inputs".into()));
        }

        let x_mean: DVector<f64> = DVector::from_iterator(p, x.column_iter().map(|c| c.mean()));
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let mut xc = x.clone();
        for (j, mut col) in xc.column_iter_mut().enumerate() {
            col.add_scalar_mut(-x_mean[j]);
        }
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

        let xtx = xc.transpose() * &xc;
        let xty = xc.transpose() * &yc;
        let eig = SymmetricEigen::new(xtx);
        let eigvals: Vec<f64> = eig.eigenvalues.iter().map(|&s| s.max(0.0)).collect();
        let v = eig.eigenvectors;
        let vt_xty = v.transpose() * &xty;

        // w = alpha * V diag(1 / (lambda + alpha s)) V' X'y
        let posterior_mean = |alpha: f64, lambda: f64| -> DVector<f64> {
            let scaled = DVector::from_iterator(
                p,
                vt_xty
                    .iter()
                    .zip(&eigvals)
                    .map(|(b, s)| alpha * b / (lambda + alpha * s)),
            );
            &v * scaled
        };

        let (alpha, lambda, n_iter) = match self.precisions {
            Precisions::Fixed { alpha, lambda } => {
                if !(alpha > 0.0 && lambda > 0.0) {
                    return Err(Error::InvalidParameter(
                        "fixed precisions must be > 0".into(),
                    ));
                }
                (alpha, lambda, 0)
            }
            Precisions::Evidence => {
                let var_y = yc.norm_squared() / n as f64;
                let mut alpha = if var_y > 0.0 { 1.0 / var_y } else { 1.0 };
                let mut lambda = 1.0;
                let h = &self.hyper;
                let mut previous: Option<DVector<f64>> = None;
                let mut iters = 0;
                for iter in 0..h.max_iter {
                    iters = iter + 1;
                    let w = posterior_mean(alpha, lambda);
                    let gamma: f64 = eigvals
                        .iter()
                        .map(|s| alpha * s / (lambda + alpha * s))
                        .sum();
                    let rss = (&yc - &xc * &w).norm_squared();
                    lambda = (gamma + 2.0 * h.lambda_1) / (w.norm_squared() + 2.0 * h.lambda_2);
                    alpha = (n as f64 - gamma + 2.0 * h.alpha_1) / (rss + 2.0 * h.alpha_2);
                    debug_assert!(alpha > 0.0 && lambda > 0.0);
                    if let Some(prev) = &previous {
                        if (prev - &w).abs().sum() < h.tol {
                            break;
                        }
                    }
                    previous = Some(w);
                }
                (alpha, lambda, iters)
            }
        };
        if !(alpha.is_finite() && lambda.is_finite()) {
            return Err(Error::NonFinite("evidence precisions".into()));
        }

        let weights = posterior_mean(alpha, lambda);
        let inv = DVector::from_iterator(p, eigvals.iter().map(|s| 1.0 / (lambda + alpha * s)));
        let cov = &v * DMatrix::from_diagonal(&inv) * v.transpose();
        let covariance = (&cov + cov.transpose()) * 0.5;
        let intercept = y_mean - x_mean.dot(&weights);

        Ok(Posterior {
            weights,
            intercept,
            alpha,
            lambda,
            covariance,
            n_iter,
        })
    }
}

/// Per-column centring and scaling learned from training rows; missing values
/// map to the training mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    /// Fits on `rows` of the named columns. Columns with fewer than two observed
    /// values or zero sample SD are dropped and returned separately.
    pub fn fit(m: &FeatureMatrix, rows: &[usize], names: &[String]) -> Result<(Self, Vec<String>)> {
        let mut kept = Standardizer {
            names: Vec::new(),
            means: Vec::new(),
            scales: Vec::new(),
        };
        let mut dropped = Vec::new();
        for name in names {
            let col = m.column(name).ok_or_else(|| Error::ColumnMismatch {
                expected: names.to_vec(),
                got: m.names().to_vec(),
            })?;
            let vals: Vec<f64> = rows.iter().filter_map(|&r| col[r]).collect();
            let sd = crate::stats::sample_sd(&vals).unwrap_or(0.0);
            if vals.len() < 2 || vals.iter().all(|&v| v == vals[0]) || sd == 0.0 {
                warn!("dropping zero-variance training column `{name}`");
                dropped.push(name.clone());
                continue;
            }
            kept.names.push(name.clone());
            kept.means.push(vals.iter().sum::<f64>() / vals.len() as f64);
            kept.scales.push(sd);
        }
        Ok((kept, dropped))
    }

    pub fn transform_row(&self, raw: &[Option<f64>]) -> Vec<f64> {
        raw.iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(v, (m, s))| v.map_or(0.0, |v| (v - m) / s))
            .collect()
    }

    /// Standardized design matrix for `rows` of `m`.
    pub fn transform(&self, m: &FeatureMatrix, rows: &[usize]) -> Result<DMatrix<f64>> {
        let cols = self
            .names
            .iter()
            .map(|n| {
                m.column(n).ok_or_else(|| Error::ColumnMismatch {
                    expected: self.names.clone(),
                    got: m.names().to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(rows.len(), self.names.len(), |i, j| {
            cols[j][rows[i]].map_or(0.0, |v| (v - self.means[j]) / self.scales[j])
        }))
    }
}

/// A trained Bayesian ridge model with its standardization, serializable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub standardizer: Standardizer,
    /// Weights on the standardized scale.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub posterior_covariance: Vec<Vec<f64>>,
    pub n_iter_used: usize,
    pub hyperparams: RidgeHyperparams,
}

impl ModelFit {
    /// Standardizes `names` on `rows` and fits by evidence maximization.
    pub fn train(
        m: &FeatureMatrix,
        rows: &[usize],
        names: &[String],
        hyper: &RidgeHyperparams,
    ) -> Result<Self> {
        let (standardizer, _) = Standardizer::fit(m, rows, names)?;
        if standardizer.names.is_empty() {
            return Err(Error::EmptySelection(" with non-zero training variance".into()));
        }
        let x = standardizer.transform(m, rows)?;
        let y: Vec<f64> = rows.iter().map(|&r| m.target()[r]).collect();
        let post = BayesianRidge::new(*hyper).fit(&x, &y)?;
        Ok(Self::from_posterior(standardizer, post, *hyper))
    }

    fn from_posterior(standardizer: Standardizer, post: Posterior, hyper: RidgeHyperparams) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            feature_names: standardizer.names.clone(),
            standardizer,
            weights: post.weights.iter().copied().collect(),
            intercept: post.intercept,
            alpha: post.alpha,
            lambda: post.lambda,
            posterior_covariance: post
                .covariance
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            n_iter_used: post.n_iter,
            hyperparams: hyper,
        }
    }

    /// Predicts raw (unstandardized) rows whose columns are `names`.
    pub fn predict(&self, names: &[String], rows: &[Vec<Option<f64>>]) -> Result<Vec<f64>> {
        if names != self.feature_names.as_slice() {
            return Err(Error::ColumnMismatch {
                expected: self.feature_names.clone(),
                got: names.to_vec(),
            });
        }
        rows.iter()
            .map(|row| {
                if row.len() != names.len() {
                    return Err(Error::LengthMismatch {
                        left: names.len(),
                        right: row.len(),
                    });
                }
                let z = self.standardizer.transform_row(row);
                Ok(self.intercept + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
            })
            .collect()
    }

    pub fn predict_matrix(&self, m: &FeatureMatrix, rows: &[usize]) -> Result<Vec<f64>> {
        let x = self.standardizer.transform(m, rows)?;
        let w = DVector::from_column_slice(&self.weights);
        Ok((x * w).iter().map(|v| v + self.intercept).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let fit: ModelFit = serde_json::from_str(&text)?;
        if fit.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {}",
                fit.format_version
            )));
        }
        Ok(fit)
    }
}

/// A regressor usable by the cross-validation harness. Inputs are already standardized.
pub trait Regressor: Sync {
    fn name(&self) -> &str;
    fn fit_predict(&self, x_train: &DMatrix<f64>, y_train: &[f64], x_test: &DMatrix<f64>)
        -> Result<Vec<f64>>;
}

fn predict_linear(x: &DMatrix<f64>, w: &DVector<f64>, intercept: f64) -> Vec<f64> {
    (x * w).iter().map(|v| v + intercept).collect()
}

impl Regressor for BayesianRidge {
    fn name(&self) -> &str {
        "BayesianRidge"
    }

    fn fit_predict(&self, x_train: &DMatrix<f64>, y_train: &[f64], x_test: &DMatrix<f64>) -> Result<Vec<f64>> {
        let post = self.fit(x_train, y_train)?;
        Ok(predict_linear(x_test, &post.weights, post.intercept))
    }
}

/// Least squares with intercept, minimum-norm solution via SVD.
#[derive(Debug, Clone, Copy, Default)]
pub struct OrdinaryLeastSquares;

/// Ridge with a fixed L2 penalty on centred data.
#[derive(Debug, Clone, Copy)]
pub struct FixedRidge {
    pub penalty: f64,
}

fn centred(x: &DMatrix<f64>, y: &[f64]) -> (DMatrix<f64>, DVector<f64>, DVector<f64>, f64) {
    let (n, p) = x.shape();
    let x_mean = DVector::from_iterator(p, x.column_iter().map(|c| c.mean()));
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-x_mean[j]);
    }
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    (xc, yc, x_mean, y_mean)
}

impl Regressor for OrdinaryLeastSquares {
    fn name(&self) -> &str {
        "OLS"
    }

    fn fit_predict(&self, x_train: &DMatrix<f64>, y_train: &[f64], x_test: &DMatrix<f64>) -> Result<Vec<f64>> {
        let (xc, yc, x_mean, y_mean) = centred(x_train, y_train);
        let w = xc
            .svd(true, true)
            .solve(&yc, 1e-12)
            .map_err(|e| Error::InvalidParameter(format!("least squares: {e}")))?;
        Ok(predict_linear(x_test, &w, y_mean - x_mean.dot(&w)))
    }
}

impl Regressor for FixedRidge {
    fn name(&self) -> &str {
        "Ridge"
    }

    fn fit_predict(&self, x_train: &DMatrix<f64>, y_train: &[f64], x_test: &DMatrix<f64>) -> Result<Vec<f64>> {
        let (xc, yc, x_mean, y_mean) = centred(x_train, y_train);
        let p = xc.ncols();
        let a = xc.transpose() * &xc + DMatrix::identity(p, p) * self.penalty;
        let w = a
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("ridge system not positive definite".into()))?
            .solve(&(xc.transpose() * yc));
        Ok(predict_linear(x_test, &w, y_mean - x_mean.dot(&w)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub r2: f64,
    pub mae: f64,
    /// `None` when the predictions are constant.
    pub pearson_r: Option<f64>,
    pub pearson_p: Option<f64>,
}

pub fn metrics(y_true: &[f64], y_pred: &[f64]) -> Result<Metrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    let n = y_true.len();
    if n < 2 {
        return Err(Error::TooFew {
            what: "observations for metrics",
            needed: 2,
            got: n,
        });
    }
    if y_true.iter().all(|&v| v == y_true[0]) {
        return Err(Error::ZeroVariance("y_true".into()));
    }
    let mean = y_true.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y_true.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p).powi(2)).sum();
    let mae = y_true.iter().zip(y_pred).map(|(t, p)| (t - p).abs()).sum::<f64>() / n as f64;
    let corr = if n >= 3 { pearson(y_true, y_pred).ok() } else { None };
    Ok(Metrics {
        r2: 1.0 - ss_res / ss_tot,
        mae,
        pearson_r: corr.as_ref().map(|c| c.r),
        pearson_p: corr.as_ref().map(|c| c.p_value),
    })
}

pub const DEFAULT_BANDS_MMOL: [f64; 3] = [1.0, 1.5, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceBand {
    pub band_mmol_l: f64,
    pub fraction: f64,
}

/// Share of predictions within each +/- band (mmol/L) after back-transforming
/// log-glucose values.
pub fn tolerance_analysis(y_true_log: &[f64], y_pred_log: &[f64], bands: &[f64]) -> Result<Vec<ToleranceBand>> {
    if y_true_log.len() != y_pred_log.len() {
        return Err(Error::LengthMismatch {
            left: y_true_log.len(),
            right: y_pred_log.len(),
        });
    }
    if y_true_log.is_empty() {
        return Err(Error::Empty("no predictions for tolerance analysis".into()));
    }
    let errors: Vec<f64> = y_true_log
        .iter()
        .zip(y_pred_log)
        .map(|(t, p)| (back_transform(*t) - back_transform(*p)).abs())
        .collect();
    Ok(bands
        .iter()
        .map(|&b| ToleranceBand {
            band_mmol_l: b,
            fraction: errors.iter().filter(|&&e| e <= b).count() as f64 / errors.len() as f64,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn noise_free_slope_recovered() {
        let n = 200;
        let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        let y: Vec<f64> = xs.iter().map(|v| 2.0 * v).collect();
        let x = DMatrix::from_column_slice(n, 1, &xs);
        let post = BayesianRidge::new(RidgeHyperparams::default()).fit(&x, &y).unwrap();
        assert!((post.weights[0] - 2.0).abs() < 1e-3, "{}", post.weights[0]);
        assert!(post.intercept.abs() < 1e-9);
        assert!(post.alpha > 0.0 && post.lambda > 0.0);
    }

    #[test]
    fn constant_target() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, 2.0, -1.0, 3.0, 0.0, 4.0, 2.0]);
        let post = BayesianRidge::new(RidgeHyperparams::default())
            .fit(&x, &[3.5; 4])
            .unwrap();
        assert!(post.weights.iter().all(|w| *w == 0.0));
        assert_eq!(post.intercept, 3.5);
    }

    #[test]
    fn fixed_precision_matches_ridge_solve() {
        let x = DMatrix::from_row_slice(
            5,
            2,
            &[0.1, 1.0, 0.7, -0.3, -1.2, 0.4, 0.9, 0.8, 0.3, -1.1],
        );
        let y = [0.5, 0.1, -0.9, 1.3, 0.2];
        let (a0, l0) = (2.0, 0.5);
        let post = BayesianRidge::with_fixed_precisions(a0, l0).fit(&x, &y).unwrap();
        let (xc, yc, _, _) = centred(&x, &y);
        let w = (xc.transpose() * &xc + DMatrix::identity(2, 2) * (l0 / a0))
            .lu()
            .solve(&(xc.transpose() * yc))
            .unwrap();
        for j in 0..2 {
            assert_relative_eq!(post.weights[j], w[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn covariance_symmetric_psd() {
        let x = DMatrix::from_fn(30, 4, |i, j| ((i * 7 + j * 13) % 11) as f64 - 5.0);
        let y: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let post = BayesianRidge::new(RidgeHyperparams::default()).fit(&x, &y).unwrap();
        let c = &post.covariance;
        assert!((c - c.transpose()).amax() <= 1e-12);
        let ev = SymmetricEigen::new(c.clone()).eigenvalues;
        assert!(ev.iter().all(|&e| e >= -1e-10));
    }

    #[test]
    fn deterministic_fit() {
        let x = DMatrix::from_fn(25, 3, |i, j| ((i * 31 + j * 17) % 19) as f64 * 0.1);
        let y: Vec<f64> = (0..25).map(|i| (i as f64).cos()).collect();
        let br = BayesianRidge::new(RidgeHyperparams::default());
        let a = br.fit(&x, &y).unwrap();
        let b = br.fit(&x, &y).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_input() {
        let br = BayesianRidge::new(RidgeHyperparams::default());
        let x = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        assert!(matches!(br.fit(&x, &[1.0, 2.0]), Err(Error::NonFinite(_))));
        let x = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert!(br.fit(&x, &[1.0]).is_err());
        let bad = BayesianRidge::new(RidgeHyperparams {
            alpha_1: 0.0,
            ..RidgeHyperparams::default()
        });
        assert!(bad.fit(&DMatrix::from_row_slice(2, 1, &[1.0, 2.0]), &[1.0, 2.0]).is_err());
    }

    fn toy_matrix() -> FeatureMatrix {
        let n = 12;
        let a: Vec<Option<f64>> = (0..n).map(|i| Some(i as f64)).collect();
        let b: Vec<Option<f64>> = (0..n).map(|i| Some(((i * 5) % 7) as f64)).collect();
        let t: Vec<f64> = (0..n).map(|i| 0.3 * i as f64 - 0.1 * ((i * 5) % 7) as f64 + 1.0).collect();
        FeatureMatrix::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            vec!["a".into(), "b".into()],
            vec![a, b],
            t,
        )
        .unwrap()
    }

    #[test]
    fn predict_checks_columns_and_is_permutation_invariant() {
        let m = toy_matrix();
        let rows: Vec<usize> = (0..m.n_rows()).collect();
        let names = vec!["a".to_string(), "b".to_string()];
        let fit = ModelFit::train(&m, &rows, &names, &RidgeHyperparams::default()).unwrap();
        let raw: Vec<Vec<Option<f64>>> = rows
            .iter()
            .map(|&r| vec![m.column("a").unwrap()[r], m.column("b").unwrap()[r]])
            .collect();
        let base = fit.predict(&names, &raw).unwrap();
        assert_eq!(base, fit.predict_matrix(&m, &rows).unwrap());

        let swapped = vec!["b".to_string(), "a".to_string()];
        assert!(matches!(
            fit.predict(&swapped, &raw),
            Err(Error::ColumnMismatch { .. })
        ));

        let mut perm = fit.clone();
        perm.feature_names.reverse();
        perm.standardizer.names.reverse();
        perm.standardizer.means.reverse();
        perm.standardizer.scales.reverse();
        perm.weights.reverse();
        let raw_swapped: Vec<Vec<Option<f64>>> =
            raw.iter().map(|r| vec![r[1], r[0]]).collect();
        let out = perm.predict(&swapped, &raw_swapped).unwrap();
        for (x, y) in base.iter().zip(&out) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }

        // consistent with the reported in-sample r2
        let m2 = metrics(m.target(), &base).unwrap();
        assert!(m2.r2 > 0.99);
    }

    #[test]
    fn centred_rows_predict_intercept() {
        let m = toy_matrix();
        let rows: Vec<usize> = (0..m.n_rows()).collect();
        let names = vec!["a".to_string(), "b".to_string()];
        let fit = ModelFit::train(&m, &rows, &names, &RidgeHyperparams::default()).unwrap();
        let at_mean = vec![vec![Some(fit.standardizer.means[0]), Some(fit.standardizer.means[1])]];
        assert_relative_eq!(fit.predict(&names, &at_mean).unwrap()[0], fit.intercept, epsilon = 1e-12);
        // missing values impute to the training mean
        assert_eq!(fit.predict(&names, &[vec![None, None]]).unwrap()[0], fit.intercept);
    }

    #[test]
    fn model_file_round_trip() {
        let m = toy_matrix();
        let rows: Vec<usize> = (0..m.n_rows()).collect();
        let fit = ModelFit::train(&m, &rows, &["a".into(), "b".into()], &RidgeHyperparams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fit.json");
        fit.save(&p).unwrap();
        assert_eq!(ModelFit::load(&p).unwrap(), fit);
    }

    #[test]
    fn zero_variance_training_column_dropped() {
        let m = FeatureMatrix::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["flat".into(), "x".into()],
            vec![vec![Some(1.0); 3], vec![Some(1.0), Some(2.0), Some(4.0)]],
            vec![0.1, 0.2, 0.4],
        )
        .unwrap();
        let (s, dropped) = Standardizer::fit(&m, &[0, 1, 2], &["flat".into(), "x".into()]).unwrap();
        assert_eq!(dropped, vec!["flat"]);
        assert_eq!(s.names, vec!["x"]);
    }

    #[test]
    fn metric_cases() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let m = metrics(&y, &y).unwrap();
        assert_eq!((m.r2, m.mae), (1.0, 0.0));
        let m = metrics(&y, &[2.5; 4]).unwrap();
        assert_eq!(m.r2, 0.0);
        assert!(m.pearson_r.is_none());
        let m = metrics(&y, &[4.0, 3.0, 2.0, 1.0]).unwrap();
        assert!(m.r2 < 0.0);
        assert!(matches!(metrics(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn tolerance_cases() {
        let t = [5.0f64.ln(), 7.0f64.ln()];
        let exact = tolerance_analysis(&t, &t, &DEFAULT_BANDS_MMOL).unwrap();
        assert!(exact.iter().all(|b| b.fraction == 1.0));
        let p = [5.4f64.ln(), 8.2f64.ln()];
        let f: Vec<f64> = tolerance_analysis(&t, &p, &DEFAULT_BANDS_MMOL)
            .unwrap()
            .iter()
            .map(|b| b.fraction)
            .collect();
        assert_eq!(f, vec![0.5, 1.0, 1.0]);
    }

    #[test]
    fn reference_regressors_agree_on_well_posed_data() {
        let x = DMatrix::from_fn(40, 3, |i, j| ((i * (j + 3) * 7) % 17) as f64 / 17.0);
        let y: Vec<f64> = (0..40)
            .map(|i| 1.0 + 2.0 * x[(i, 0)] - x[(i, 1)] + 0.5 * x[(i, 2)])
            .collect();
        let ols = OrdinaryLeastSquares.fit_predict(&x, &y, &x).unwrap();
        let ridge = FixedRidge { penalty: 1e-9 }.fit_predict(&x, &y, &x).unwrap();
        for i in 0..40 {
            assert_relative_eq!(ols[i], y[i], epsilon = 1e-9);
            assert_relative_eq!(ridge[i], y[i], epsilon = 1e-6);
        }
    }
}
