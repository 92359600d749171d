//! Feature selection: score normalization, local false discovery rates,
//! and the retention rules.
//!
//! The pipeline transforms summary scores to approximately standard-normal
//! null scores (cube-root normalization of a scaled chi-square), fits an
//! empirical two-component mixture, and keeps features by one of four
//! rules:
//!
//! * `fndr(c)` keeps everything except the confident nulls
//!   (`local fdr < 1 - c`) - the default for building predictors,
//! * `fdr(c)` keeps only the confident non-nulls (`local fdr < c`),
//! * `hc(f)` thresholds at the maximal standardized p-value deviation
//!   within the top fraction `f`,
//! * `top(m)` keeps a fixed count.
//!
//! For a cutoff `c <= 0.5` the fndr-kept set always contains the fdr-kept
//! set; the features in between form the "buffer zone" that helps
//! prediction without being individually significant.

mod fdr;
mod hc;

pub use fdr::{
    estimate_fdr, estimate_fdr_symmetric, estimate_fdr_symmetric_with, estimate_fdr_with,
    FdrEstimate, FdrOptions, NullParams,
};
pub use hc::{hc_scores, select_hc, select_hc_with, HcVariance};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A retention rule together with its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum SelectionRule {
    /// Exclude features whose false nondiscovery rate is below `cutoff`;
    /// i.e. keep `local fdr < 1 - cutoff`.
    Fndr { cutoff: f64 },
    /// Keep features with `local fdr < cutoff`.
    Fdr { cutoff: f64 },
    /// Higher criticism threshold searched over the top `fraction` of
    /// p-values.
    Hc { fraction: f64 },
    /// Keep the `count` best-ranked features.
    Top { count: usize },
}

impl std::fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SelectionRule::Fndr { cutoff } => write!(f, "fndr(cutoff={cutoff})"),
            SelectionRule::Fdr { cutoff } => write!(f, "fdr(cutoff={cutoff})"),
            SelectionRule::Hc { fraction } => write!(f, "hc(fraction={fraction})"),
            SelectionRule::Top { count } => write!(f, "top(count={count})"),
        }
    }
}

/// Whether fdr-based rules threshold the local fdr or the tail-area Fdr.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FdrBasis {
    #[default]
    Local,
    Tail,
}

/// Outcome of a selection rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Kept feature indices, strictly increasing.
    pub kept: Vec<usize>,
    pub rule: SelectionRule,
    /// The realized cutoff on the summary-score scale: the smallest kept
    /// score, or infinity when nothing is kept.
    pub threshold_value: f64,
    /// The per-feature fdr estimate backing the rule, when one was used.
    pub fdr: Option<FdrEstimate>,
}

/// Normalizes summary scores to approximately standard-normal null scores.
///
/// The null is a chi-square with `df` degrees of freedom and an unknown
/// scale; the scale is fitted by matching the sample median to the
/// transform center, then the cube-root (Wilson-Hilferty) map is applied.
pub fn normalize_scores(s: &[f64], df: f64) -> Result<Vec<f64>> {
    let scale = fit_chi2_scale(s, df)?;
    Ok(wilson_hilferty(s, df, scale))
}

/// Median-matching fit of the chi-square scale parameter.
pub fn fit_chi2_scale(s: &[f64], df: f64) -> Result<f64> {
    check_scores(s, df)?;
    let mut sorted = s.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    if median <= 0.0 {
        return Err(Error::Degenerate(
            "median summary score is zero; cannot fit the null scale".into(),
        ));
    }
    let shift = 1.0 - 2.0 / (9.0 * df);
    Ok(median / (df * shift.powi(3)))
}

/// The cube-root normalizing transform with an explicit scale:
/// `z = ((s / (scale df))^(1/3) - (1 - 2/(9 df))) / sqrt(2/(9 df))`.
pub fn wilson_hilferty(s: &[f64], df: f64, scale: f64) -> Vec<f64> {
    let shift = 1.0 - 2.0 / (9.0 * df);
    let sd = (2.0 / (9.0 * df)).sqrt();
    s.iter()
        .map(|&si| ((si / (scale * df)).cbrt() - shift) / sd)
        .collect()
}

fn check_scores(s: &[f64], df: f64) -> Result<()> {
    if !df.is_finite() || df <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "degrees of freedom must be positive, got {df}"
        )));
    }
    if s.is_empty() {
        return Err(Error::InvalidArgument("empty score vector".into()));
    }
    if let Some(&bad) = s.iter().find(|&&v| !v.is_finite() || v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "summary scores must be finite and nonnegative, got {bad}"
        )));
    }
    Ok(())
}

fn check_cutoff(cutoff: f64) -> Result<()> {
    if !cutoff.is_finite() || cutoff <= 0.0 || cutoff > 0.5 {
        return Err(Error::InvalidArgument(format!(
            "cutoff must lie in (0, 0.5], got {cutoff}"
        )));
    }
    Ok(())
}

fn finish(kept: Vec<usize>, rule: SelectionRule, scores: &[f64]) -> SelectionResult {
    let threshold_value = kept
        .iter()
        .map(|&i| scores[i])
        .fold(f64::INFINITY, f64::min);
    SelectionResult {
        kept,
        rule,
        threshold_value,
        fdr: None,
    }
}

fn fdr_values(est: &FdrEstimate, basis: FdrBasis) -> &[f64] {
    match basis {
        FdrBasis::Local => &est.local_fdr,
        FdrBasis::Tail => &est.tail_fdr,
    }
}

/// Keeps every feature not confidently null: `fdr_i < 1 - cutoff`.
/// The kept set is a superset of the `fdr` rule's at the same cutoff.
pub fn select_fndr(est: &FdrEstimate, scores: &[f64], cutoff: f64) -> Result<SelectionResult> {
    select_fndr_with(est, scores, cutoff, FdrBasis::Local)
}

pub fn select_fndr_with(
    est: &FdrEstimate,
    scores: &[f64],
    cutoff: f64,
    basis: FdrBasis,
) -> Result<SelectionResult> {
    check_cutoff(cutoff)?;
    check_lengths(est, scores)?;
    let fdr = fdr_values(est, basis);
    let kept = (0..scores.len())
        .filter(|&i| fdr[i] < 1.0 - cutoff)
        .collect();
    Ok(attach(
        finish(kept, SelectionRule::Fndr { cutoff }, scores),
        est,
    ))
}

/// Keeps only the confidently non-null features: `fdr_i < cutoff`.
pub fn select_fdr(est: &FdrEstimate, scores: &[f64], cutoff: f64) -> Result<SelectionResult> {
    select_fdr_with(est, scores, cutoff, FdrBasis::Local)
}

pub fn select_fdr_with(
    est: &FdrEstimate,
    scores: &[f64],
    cutoff: f64,
    basis: FdrBasis,
) -> Result<SelectionResult> {
    check_cutoff(cutoff)?;
    check_lengths(est, scores)?;
    let fdr = fdr_values(est, basis);
    let kept = (0..scores.len()).filter(|&i| fdr[i] < cutoff).collect();
    Ok(attach(
        finish(kept, SelectionRule::Fdr { cutoff }, scores),
        est,
    ))
}

/// Keeps the `count` features with the largest scores (ties break to the
/// lower index). Counts above p are clamped.
pub fn select_top(scores: &[f64], count: usize) -> Result<SelectionResult> {
    if count == 0 {
        return Err(Error::InvalidArgument("top count must be positive".into()));
    }
    let count = count.min(scores.len());
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = idx[..count].to_vec();
    kept.sort_unstable();
    Ok(finish(kept, SelectionRule::Top { count }, scores))
}

/// Runs a rule against a fitted fdr estimate and attaches it to the result.
pub fn select(
    est: &FdrEstimate,
    scores: &[f64],
    rule: SelectionRule,
    basis: FdrBasis,
) -> Result<SelectionResult> {
    match rule {
        SelectionRule::Fndr { cutoff } => select_fndr_with(est, scores, cutoff, basis),
        SelectionRule::Fdr { cutoff } => select_fdr_with(est, scores, cutoff, basis),
        SelectionRule::Hc { fraction } => {
            let result = select_hc(&est.pvalues, scores, fraction)?;
            Ok(attach(result, est))
        }
        SelectionRule::Top { count } => Ok(attach(select_top(scores, count)?, est)),
    }
}

fn attach(mut result: SelectionResult, est: &FdrEstimate) -> SelectionResult {
    result.fdr = Some(est.clone());
    result
}

fn check_lengths(est: &FdrEstimate, scores: &[f64]) -> Result<()> {
    if est.local_fdr.len() != scores.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} fdr values against {} scores",
            est.local_fdr.len(),
            scores.len()
        )));
    }
    Ok(())
}

/// Writes a selection report as delimited text: feature id, summary score,
/// normalized score, p-value, local fdr, kept flag, rule.
pub fn write_selection_tsv<W: Write + ?Sized>(
    w: &mut W,
    feature_ids: &[String],
    scores: &[f64],
    result: &SelectionResult,
    comments: &[String],
) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "feature_id\tscore\tz\tpvalue\tlocal_fdr\tkept\trule")?;
    let mut kept_flags = vec![false; feature_ids.len()];
    for &i in &result.kept {
        kept_flags[i] = true;
    }
    for (i, id) in feature_ids.iter().enumerate() {
        let (z, pv, lf) = match &result.fdr {
            Some(est) => (
                format!("{}", est.transformed[i]),
                format!("{}", est.pvalues[i]),
                format!("{}", est.local_fdr[i]),
            ),
            None => ("NA".into(), "NA".into(), "NA".into()),
        };
        writeln!(
            w,
            "{id}\t{}\t{z}\t{pv}\t{lf}\t{}\t{}",
            scores[i],
            u8::from(kept_flags[i]),
            result.rule
        )?;
    }
    Ok(())
}
