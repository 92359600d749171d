//! Higher criticism thresholding.
//!
//! Each sorted p-value is centered and standardized against its uniform
//! order statistic, `HC_i = (i/(p+1) - p_(i)) / sd_i`, and the threshold
//! is placed at the index maximizing `|HC_i|` within the top fraction of
//! the ranking. Everything up to that index is kept, so the kept set is
//! always a prefix of the score ranking.

use serde::{Deserialize, Serialize};

use super::{finish, SelectionResult, SelectionRule};
use crate::error::{Error, Result};

/// Standardization of the order-statistic deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HcVariance {
    /// Exact Beta(i, p-i+1) variance of the i-th uniform order statistic.
    #[default]
    OrderStatistic,
    /// Binomial plug-in `p_(i) (1 - p_(i)) / p`.
    Plugin,
}

/// HC scores for p-values already sorted ascending.
pub fn hc_scores(sorted_pvalues: &[f64], variance: HcVariance) -> Vec<f64> {
    let p = sorted_pvalues.len();
    let pf = p as f64;
    sorted_pvalues
        .iter()
        .enumerate()
        .map(|(idx, &pv)| {
            let i = (idx + 1) as f64;
            let mean = i / (pf + 1.0);
            let var = match variance {
                HcVariance::OrderStatistic => {
                    i * (pf - i + 1.0) / ((pf + 1.0).powi(2) * (pf + 2.0))
                }
                HcVariance::Plugin => {
                    let clamped = pv.clamp(1e-10, 1.0 - 1e-10);
                    clamped * (1.0 - clamped) / pf
                }
            };
            (mean - pv) / var.sqrt()
        })
        .collect()
}

/// Selects by higher criticism with the order-statistic standardization.
pub fn select_hc(pvalues: &[f64], scores: &[f64], fraction: f64) -> Result<SelectionResult> {
    select_hc_with(pvalues, scores, fraction, HcVariance::OrderStatistic)
}

pub fn select_hc_with(
    pvalues: &[f64],
    scores: &[f64],
    fraction: f64,
    variance: HcVariance,
) -> Result<SelectionResult> {
    let p = pvalues.len();
    if p < 10 {
        return Err(Error::TooFewSamples { needed: 10, got: p });
    }
    if pvalues.len() != scores.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} p-values against {} scores",
            pvalues.len(),
            scores.len()
        )));
    }
    if !fraction.is_finite() || fraction <= 0.0 || fraction > 0.5 {
        return Err(Error::InvalidArgument(format!(
            "search fraction must lie in (0, 0.5], got {fraction}"
        )));
    }
    if let Some(&bad) = pvalues.iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::InvalidArgument(format!(
            "p-value {bad} outside [0, 1]"
        )));
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| pvalues[a].partial_cmp(&pvalues[b]).unwrap().then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| pvalues[i]).collect();
    let hc = hc_scores(&sorted, variance);

    let limit = ((fraction * p as f64).floor() as usize).max(1);
    let mut best = 0usize;
    for i in 1..limit.min(p) {
        if hc[i].abs() > hc[best].abs() {
            best = i;
        }
    }
    let mut kept: Vec<usize> = order[..=best].to_vec();
    kept.sort_unstable();
    Ok(finish(kept, SelectionRule::Hc { fraction }, scores))
}
