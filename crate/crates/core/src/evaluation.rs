//! Cross-validated error estimation and synthetic benchmark data.
//!
//! Feature ranking, fdr estimation, and selection are re-run inside every
//! training fold, so the reported error includes the selection process and
//! is not biased by snooping the held-out fold. Splits are derived from a
//! master seed through per-repetition RNG streams and evaluated in
//! parallel; results are identical for any worker count.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{self, Mode};
use crate::scores::{compute_scores, ScoreTable};
use crate::selection::{FdrBasis, SelectionRule};

/// Cross-validation layout: `folds` stratified folds, repeated
/// `repetitions` times with fresh fold assignments.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: usize,
    pub repetitions: usize,
    pub seed: u64,
    /// Stratify fold assignment by class (recommended and default).
    pub balanced: bool,
}

impl Default for CvPlan {
    fn default() -> Self {
        Self {
            folds: 10,
            repetitions: 20,
            seed: 0,
            balanced: true,
        }
    }
}

/// What runs inside each training fold.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Pipeline {
    pub mode: Mode,
    /// Ranking criterion for `top` selection: the summary score or the
    /// max-|t| criterion. fdr-based rules require the summary score.
    pub score: RankingScore,
    /// `None` keeps every feature.
    pub selection: Option<SelectionRule>,
    pub basis: FdrBasis,
}

impl Pipeline {
    pub fn new(mode: Mode, selection: Option<SelectionRule>) -> Self {
        Self {
            mode,
            score: RankingScore::CatSummary,
            selection,
            basis: FdrBasis::Local,
        }
    }
}

/// Ranking statistic used by selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankingScore {
    /// Sum of squared decorrelated t-scores (chi-square-like null).
    CatSummary,
    /// Max absolute t-score across classes.
    PamMax,
}

/// One train/test split.
#[derive(Debug, Clone)]
pub struct Split {
    pub repetition: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Aggregated cross-validation outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub config: CvConfig,
    /// Misclassification fraction per split, `folds x repetitions` entries.
    pub split_errors: Vec<f64>,
    /// Features kept per split (p when no selection runs).
    pub split_feature_counts: Vec<usize>,
    pub mean_error: f64,
    /// Standard deviation of split errors over sqrt(#splits).
    pub std_error: f64,
}

/// Echo of the full run configuration, embedded in every report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvConfig {
    pub plan: CvPlan,
    pub pipeline: Pipeline,
    pub n_samples: usize,
    pub n_features: usize,
    pub classes: Vec<String>,
}

/// Stratified fold assignments for every repetition.
///
/// Within each repetition every class is shuffled and dealt into folds, so
/// per-class fold sizes differ by at most one sample. Each repetition
/// draws from its own RNG stream of the master seed.
pub fn stratified_splits(labels: &[usize], n_classes: usize, plan: &CvPlan) -> Result<Vec<Split>> {
    let n = labels.len();
    if plan.folds < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 folds, got {}",
            plan.folds
        )));
    }
    if plan.repetitions < 1 {
        return Err(Error::InvalidArgument("need at least 1 repetition".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    if plan.balanced {
        let min_count = by_class.iter().map(Vec::len).min().unwrap_or(0);
        if plan.folds > min_count {
            return Err(Error::Stratification(format!(
                "{} folds exceed the smallest class count {min_count}",
                plan.folds
            )));
        }
    }

    let mut splits = Vec::with_capacity(plan.folds * plan.repetitions);
    for rep in 0..plan.repetitions {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        rng.set_stream(rep as u64 + 1);
        let mut fold_of = vec![0usize; n];
        if plan.balanced {
            for class in &by_class {
                let mut shuffled = class.clone();
                shuffled.shuffle(&mut rng);
                let offset = rng.gen_range(0..plan.folds);
                for (pos, &sample) in shuffled.iter().enumerate() {
                    fold_of[sample] = (pos + offset) % plan.folds;
                }
            }
        } else {
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            for (pos, &sample) in all.iter().enumerate() {
                fold_of[sample] = pos % plan.folds;
            }
        }
        for fold in 0..plan.folds {
            let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
            if test.is_empty() {
                return Err(Error::Stratification(format!(
                    "fold {fold} of repetition {rep} is empty"
                )));
            }
            let mut seen = vec![false; n_classes];
            for &i in &train {
                seen[labels[i]] = true;
            }
            if let Some(missing) = seen.iter().position(|&s| !s) {
                return Err(Error::Stratification(format!(
                    "class {missing} is absent from the training side of fold {fold}, \
                     repetition {rep}"
                )));
            }
            splits.push(Split {
                repetition: rep,
                fold,
                train,
                test,
            });
        }
    }
    Ok(splits)
}

/// Outcome of a single split.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub error: f64,
    pub kept_features: usize,
}

/// Trains on the split's training rows only, selects features there,
/// refits on the kept subset, and scores the held-out rows.
pub fn evaluate_split(
    data: &LabeledDataset,
    split: &Split,
    pipeline: &Pipeline,
) -> Result<SplitOutcome> {
    let train = data.subset_samples(&split.train)?;
    let kept = match &pipeline.selection {
        None => None,
        Some(rule) => {
            let model = model::fit(&train, pipeline.mode)?;
            let table = compute_scores(&model)?;
            Some(select_on_table(&table, pipeline, rule)?)
        }
    };

    let (model, test_matrix) = match kept {
        None => (
            model::fit(&train, pipeline.mode)?,
            data.subset_samples(&split.test)?,
        ),
        Some(kept) if kept.is_empty() => {
            // Nothing survived selection: fall back to the prior-only rule.
            let model = model::fit(&train, pipeline.mode)?;
            let priors = model.priors().values.clone();
            let predicted = crate::model::argmax_lowest(&priors);
            let errors = split
                .test
                .iter()
                .filter(|&&i| data.labels()[i] != predicted)
                .count();
            return Ok(SplitOutcome {
                error: errors as f64 / split.test.len() as f64,
                kept_features: 0,
            });
        }
        Some(kept) => (
            model::fit_selected(&train, pipeline.mode, &kept)?,
            data.subset_samples(&split.test)?.subset_features(&kept)?,
        ),
    };

    let kept_features = model.n_features();
    let outputs = model.predict(test_matrix.matrix())?;
    let errors = outputs
        .iter()
        .zip(test_matrix.labels())
        .filter(|(o, &l)| o.predicted != l)
        .count();
    Ok(SplitOutcome {
        error: errors as f64 / split.test.len() as f64,
        kept_features,
    })
}

fn select_on_table(
    table: &ScoreTable,
    pipeline: &Pipeline,
    rule: &SelectionRule,
) -> Result<Vec<usize>> {
    match (pipeline.score, rule) {
        (RankingScore::PamMax, SelectionRule::Top { count }) => {
            Ok(crate::selection::select_top(&table.pam_summary, *count)?.kept)
        }
        (RankingScore::PamMax, other) => Err(Error::InvalidArgument(format!(
            "the max-|t| ranking has no chi-square null; rule {other} needs the summary score"
        ))),
        (RankingScore::CatSummary, SelectionRule::Top { count }) => {
            Ok(crate::selection::select_top(&table.summary, *count)?.kept)
        }
        (RankingScore::CatSummary, rule) => {
            let est = table.fdr_estimate()?;
            Ok(crate::selection::select(&est, &table.summary, *rule, pipeline.basis)?.kept)
        }
    }
}

/// Runs the full cross-validation plan. Deterministic for a fixed seed
/// regardless of thread count.
pub fn cross_validate(
    data: &LabeledDataset,
    pipeline: &Pipeline,
    plan: &CvPlan,
) -> Result<CvReport> {
    let splits = stratified_splits(data.labels(), data.n_classes(), plan)?;
    let outcomes: Vec<SplitOutcome> = splits
        .par_iter()
        .map(|split| evaluate_split(data, split, pipeline))
        .collect::<Result<Vec<_>>>()?;

    let m = outcomes.len() as f64;
    let split_errors: Vec<f64> = outcomes.iter().map(|o| o.error).collect();
    let split_feature_counts: Vec<usize> = outcomes.iter().map(|o| o.kept_features).collect();
    let mean_error = split_errors.iter().sum::<f64>() / m;
    let std_error = if outcomes.len() > 1 {
        let var = split_errors
            .iter()
            .map(|e| (e - mean_error).powi(2))
            .sum::<f64>()
            / (m - 1.0);
        (var / m).sqrt()
    } else {
        0.0
    };
    Ok(CvReport {
        config: CvConfig {
            plan: *plan,
            pipeline: *pipeline,
            n_samples: data.n_samples(),
            n_features: data.n_features(),
            classes: data.class_names().to_vec(),
        },
        split_errors,
        split_feature_counts,
        mean_error,
        std_error,
    })
}

impl CvReport {
    /// Serializes the report (config echo included) as a JSON document.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Model(e.to_string()))
    }
}

/// Specification of a synthetic benchmark dataset.
///
/// Features share a block-diagonal equicorrelation structure; the first
/// `round(nonnull_fraction * p)` features carry a class-mean shift of
/// `effect_size`, assigned round-robin over classes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Samples per class; its length sets the number of classes.
    pub n_per_class: Vec<usize>,
    pub p: usize,
    pub nonnull_fraction: f64,
    pub effect_size: f64,
    /// Common within-block correlation.
    pub block_rho: f64,
    pub block_size: usize,
}

/// A generated dataset together with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: LabeledDataset,
    /// Indices of the truly informative features.
    pub nonnull: Vec<usize>,
}

/// Draws a multivariate-normal dataset with block-equicorrelated noise.
/// Bitwise reproducible for a fixed seed.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData> {
    let k = spec.n_per_class.len();
    if k < 2 {
        return Err(Error::TooFewClasses { got: k });
    }
    if spec.n_per_class.contains(&0) {
        return Err(Error::InvalidArgument(
            "empty class in synthetic spec".into(),
        ));
    }
    if spec.p == 0 {
        return Err(Error::InvalidArgument("p must be positive".into()));
    }
    if spec.block_size == 0 {
        return Err(Error::InvalidArgument("block size must be positive".into()));
    }
    if !spec.block_rho.is_finite() || spec.block_rho.abs() >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "block correlation {} outside (-1, 1)",
            spec.block_rho
        )));
    }
    if !(0.0..=1.0).contains(&spec.nonnull_fraction) {
        return Err(Error::InvalidArgument(format!(
            "nonnull fraction {} outside [0, 1]",
            spec.nonnull_fraction
        )));
    }
    let largest_block = spec.block_size.min(spec.p);
    if largest_block > 1 && spec.block_rho <= -1.0 / (largest_block - 1) as f64 {
        return Err(Error::InvalidArgument(format!(
            "block correlation {} makes a {largest_block}-wide block non-positive-definite",
            spec.block_rho
        )));
    }

    let n: usize = spec.n_per_class.iter().sum();
    let n_nonnull = (spec.nonnull_fraction * spec.p as f64).round() as usize;
    let nonnull: Vec<usize> = (0..n_nonnull).collect();

    // Class mean shifts: nonnull feature i lifts class i mod K.
    let mut shifts = Array2::<f64>::zeros((k, spec.p));
    for &i in &nonnull {
        shifts[(i % k, i)] = spec.effect_size;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrix = Array2::<f64>::zeros((n, spec.p));
    let mut labels = Vec::with_capacity(n);
    let mut sample_ids = Vec::with_capacity(n);
    let mut row = 0usize;
    for (class, &count) in spec.n_per_class.iter().enumerate() {
        for _ in 0..count {
            let z: Array1<f64> = (0..spec.p).map(|_| rng.sample(StandardNormal)).collect();
            let mut x = Array1::<f64>::zeros(spec.p);
            let mut start = 0;
            while start < spec.p {
                let width = spec.block_size.min(spec.p - start);
                // Equicorrelated square root: a I + b 11', applied blockwise.
                let (a, b) = equicorrelated_sqrt(spec.block_rho, width);
                let block = z.slice(ndarray::s![start..start + width]);
                let total: f64 = block.sum();
                for (offset, &zv) in block.iter().enumerate() {
                    x[start + offset] = a * zv + b * total;
                }
                start += width;
            }
            x += &shifts.row(class);
            matrix.row_mut(row).assign(&x);
            labels.push(class);
            sample_ids.push(format!("s{:05}", row + 1));
            row += 1;
        }
    }
    let feature_ids = (0..spec.p).map(|i| format!("f{:06}", i + 1)).collect();
    let class_names = (0..k).map(|j| format!("c{}", j + 1)).collect();
    let dataset = LabeledDataset::new(matrix, feature_ids, sample_ids, labels, class_names)?;
    Ok(SyntheticData { dataset, nonnull })
}

/// Coefficients (a, b) with `a I + b 11'` the square root of the
/// equicorrelation matrix `(1 - rho) I + rho 11'` of the given width.
fn equicorrelated_sqrt(rho: f64, width: usize) -> (f64, f64) {
    if width == 1 {
        return (1.0, 0.0);
    }
    let w = width as f64;
    let a = (1.0 - rho).sqrt();
    let b = ((1.0 + (w - 1.0) * rho).sqrt() - a) / w;
    (a, b)
}
