use log::debug;

use super::RrSeries;
use crate::error::{Error, Result};

/// Default local window, in intervals, for the 3-SD outlier rule.
pub const DEFAULT_ARTIFACT_WINDOW: usize = 51;

const SD_LIMIT: f64 = 3.0;

/// Drops intervals further than three sample SDs from the mean of their local window.
///
/// The window for interval `i` is the `window` intervals centred on it, clipped at
/// the series edges, with `i` itself excluded from the mean and SD. A window whose
/// neighbours are all equal keeps its centre. Passes repeat until nothing further is
/// removed, so the result is a fixed point of the rule.
pub fn remove_artifacts(rr: &RrSeries, window: usize) -> Result<RrSeries> {
    let mut current = remove_artifacts_single_pass(rr, window)?;
    let mut passes = 1;
    loop {
        if current.len() < 3 {
            break;
        }
        let next = remove_artifacts_single_pass(&current, window)?;
        if next.len() == current.len() {
            break;
        }
        current = next;
        passes += 1;
    }
    debug!(
        "artifact removal: {} -> {} intervals in {passes} pass(es)",
        rr.len(),
        current.len()
    );
    Ok(current)
}

/// One application of the local 3-SD rule.
pub fn remove_artifacts_single_pass(rr: &RrSeries, window: usize) -> Result<RrSeries> {
    if window < 3 {
        return Err(Error::InvalidParameter(format!(
            "artifact window must be >= 3, got {window}"
        )));
    }
    let x = rr.intervals();
    if x.len() < 3 {
        return Err(Error::TooFew {
            what: "RR intervals for artifact removal",
            needed: 3,
            got: x.len(),
        });
    }
    let half = window / 2;
    let keep: Vec<bool> = (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            within_limit(x[i], (lo..hi).filter(|&j| j != i).map(|j| x[j]))
        })
        .collect();
    Ok(rr.retain_indices(|i| keep[i]))
}

fn within_limit(value: f64, neighbours: impl Iterator<Item = f64> + Clone) -> bool {
    let n = neighbours.clone().count();
    if n < 2 {
        return true;
    }
    let first = neighbours.clone().next().unwrap_or(value);
    if neighbours.clone().all(|v| v == first) {
        return true;
    }
    let mean = neighbours.clone().sum::<f64>() / n as f64;
    let var = neighbours.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (value - mean).abs() <= SD_LIMIT * var.sqrt()
}
