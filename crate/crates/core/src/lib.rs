//! High-dimensional linear and diagonal discriminant analysis with
//! James-Stein shrinkage training, correlation-adjusted t-score feature
//! ranking, and feature selection by false nondiscovery rate control or
//! higher criticism, plus a cross-validated evaluation harness.
//!
//! The typical flow:
//!
//! ```
//! use shrinkda::{
//!     cross_validate, generate_synthetic, CvPlan, Mode, Pipeline, SelectionRule, SyntheticSpec,
//! };
//!
//! let data = generate_synthetic(
//!     &SyntheticSpec {
//!         n_per_class: vec![30, 30],
//!         p: 400,
//!         nonnull_fraction: 0.1,
//!         effect_size: 1.5,
//!         block_rho: 0.5,
//!         block_size: 10,
//!     },
//!     7,
//! )
//! .unwrap();
//! let pipeline = Pipeline::new(Mode::Lda, Some(SelectionRule::Fndr { cutoff: 0.2 }));
//! let plan = CvPlan { folds: 5, repetitions: 1, seed: 1, balanced: true };
//! let report = cross_validate(&data.dataset, &pipeline, &plan).unwrap();
//! assert_eq!(report.split_errors.len(), 5);
//! ```
//!
//! All estimators are analytic: no resampling or tuning loops are involved
//! in training, ranking, or selection.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod scores;
pub mod selection;
pub mod shrinkage;

pub use dataset::{load_dataset, LabeledDataset, LoadOptions, LoadReport, MissingPolicy};
pub use error::{Error, Result};
pub use evaluation::{
    cross_validate, evaluate_split, generate_synthetic, stratified_splits, CvConfig, CvPlan,
    CvReport, Pipeline, RankingScore, Split, SplitOutcome, SyntheticData, SyntheticSpec,
};
pub use model::{
    fit, fit_selected, hotelling_t2, DiscriminantOutput, Mode, ShrinkageModel, DENSE_LIMIT,
};
pub use scores::{compute_scores, compute_scores_from, summarize, MomentSource, ScoreTable};
pub use selection::{
    estimate_fdr, estimate_fdr_symmetric, estimate_fdr_symmetric_with, estimate_fdr_with,
    fit_chi2_scale, hc_scores, normalize_scores, select, select_fdr, select_fndr, select_hc,
    select_top, wilson_hilferty, FdrBasis, FdrEstimate, FdrOptions, HcVariance, NullParams,
    SelectionResult, SelectionRule,
};
pub use shrinkage::{
    shrink_correlations, shrink_correlations_with_lambda, shrink_frequencies, shrink_variances,
    ShrinkageIntensities, ShrunkCorrelation, ShrunkFrequencies, ShrunkVariances,
};
