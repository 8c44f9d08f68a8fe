//! Small-sample statistics: Pearson correlation with exact two-sided p-values,
//! correlation-filter feature selection, and the paired t-test.

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// ln Γ(x) for x > 0 (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + G + 0.5;
    let series = COEF[1..]
        .iter()
        .enumerate()
        .fold(COEF[0], |acc, (i, c)| acc + c / (x + i as f64 + 1.0));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + series.ln()
}

/// Regularized incomplete beta I_x(a, b).
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

/// Continued fraction for I_x(a, b), modified Lentz.
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=1000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Student's t cumulative distribution with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * regularized_incomplete_beta(df / (df + t * t), 0.5 * df, 0.5);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided p-value P(|T| >= |t|).
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / (df + t * t), 0.5 * df, 0.5).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub feature: String,
    pub r: f64,
    pub p_value: f64,
    /// Complete pairs used.
    pub n: usize,
}

fn all_equal(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson product-moment correlation with a two-sided t-test p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::TooFew {
            what: "paired observations for correlation",
            needed: 3,
            got: n,
        });
    }
    if all_equal(x) {
        return Err(Error::ZeroVariance("x".into()));
    }
    if all_equal(y) {
        return Err(Error::ZeroVariance("y".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    // t = r sqrt(df / (1 - r^2))  =>  df / (df + t^2) = 1 - r^2
    let p_value = regularized_incomplete_beta(1.0 - r * r, 0.5 * df, 0.5).clamp(0.0, 1.0);
    Ok(CorrelationResult {
        feature: String::new(),
        r,
        p_value,
        n,
    })
}

/// Pearson correlation after dropping pairs where `x` is missing.
pub fn pearson_pairwise(x: &[Option<f64>], y: &[f64]) -> Result<CorrelationResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter_map(|(a, b)| a.map(|a| (a, *b)))
        .unzip();
    pearson(&xs, &ys)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Every scorable column, by |r| descending then name.
    pub ranked: Vec<CorrelationResult>,
    pub selected: Vec<String>,
    pub p_threshold: f64,
    pub k: usize,
}

impl SelectionReport {
    pub fn is_selected(&self, name: &str) -> bool {
        self.selected.iter().any(|s| s == name)
    }
}

/// Correlates every column with the target on `rows`, keeps p < `p_threshold`,
/// and takes the top `k` by |r| (ties by column name).
///
/// Columns with fewer than three complete pairs or zero variance are not ranked.
pub fn select_features(
    m: &FeatureMatrix,
    rows: &[usize],
    p_threshold: f64,
    k: usize,
) -> Result<SelectionReport> {
    if m.n_cols() == 0 {
        return Err(Error::Empty("feature matrix has no columns".into()));
    }
    if !(0.0..=1.0).contains(&p_threshold) {
        return Err(Error::InvalidParameter(format!(
            "p threshold {p_threshold} outside [0, 1]"
        )));
    }
    let target: Vec<f64> = rows.iter().map(|&r| m.target()[r]).collect();
    let columns: Vec<(&str, &[Option<f64>])> = m.columns().collect();
    let mut ranked: Vec<CorrelationResult> = columns
        .par_iter()
        .filter_map(|(name, col)| {
            let x: Vec<Option<f64>> = rows.iter().map(|&r| col[r]).collect();
            match pearson_pairwise(&x, &target) {
                Ok(mut c) => {
                    c.feature = name.to_string();
                    Some(c)
                }
                Err(e) => {
                    debug!("not ranking `{name}`: {e}");
                    None
                }
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.r.abs()
            .total_cmp(&a.r.abs())
            .then_with(|| a.feature.cmp(&b.feature))
    });
    let selected: Vec<String> = ranked
        .iter()
        .filter(|c| c.p_value < p_threshold)
        .take(k)
        .map(|c| c.feature.clone())
        .collect();
    if selected.is_empty() {
        warn!("no feature passed p < {p_threshold}");
    }
    Ok(SelectionReport {
        ranked,
        selected,
        p_threshold,
        k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub t: f64,
    pub p_value: f64,
    pub df: usize,
    pub mean_difference: f64,
}

/// Two-sided paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::TooFew {
            what: "pairs for a paired t-test",
            needed: 2,
            got: n,
        });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if all_equal(&d) {
        return Err(Error::ZeroVariance("paired differences".into()));
    }
    let md = mean(&d);
    let sd = (d.iter().map(|v| (v - md).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let t = md / (sd / (n as f64).sqrt());
    Ok(PairedTTest {
        t,
        p_value: student_t_two_sided(t, (n - 1) as f64),
        df: n - 1,
        mean_difference: md,
    })
}

/// Sample (n - 1) standard deviation; `None` below two values.
pub fn sample_sd(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let m = mean(v);
    Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}
