//! Per-feature t-scores, correlation-adjusted t-scores, and their
//! summaries.
//!
//! The t-score of feature i for class k standardizes the centroid
//! difference against the pooled mean,
//!
//! ```text
//! t_k = ((1/n_k - 1/n) V)^(-1/2) (mu_k - mu_pool)
//! ```
//!
//! (note the minus sign: the centroid and the pooled mean are positively
//! correlated). Cat scores decorrelate them, `cat_k = R^(-1/2) t_k`, and
//! reduce to plain t-scores when the correlation is the identity. The
//! per-feature summaries are `S_i = sum_k cat_{k,i}^2` and the max-|t|
//! criterion `S'_i = max_k |t_{k,i}|`.

use std::io::Write;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ShrinkageModel;
use crate::LabeledDataset;

/// Per-feature, per-class scores plus the per-feature summaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreTable {
    pub class_names: Vec<String>,
    pub feature_ids: Vec<String>,
    /// K×p t-scores against the pooled centroid.
    pub t_scores: Array2<f64>,
    /// K×p decorrelated t-scores; equals `t_scores` when R = I.
    pub cat_scores: Array2<f64>,
    /// `S_i`: squared cat scores summed over classes.
    pub summary: Vec<f64>,
    /// `S'_i`: the max-|t| criterion.
    pub pam_summary: Vec<f64>,
    /// `(1/n_k - 1/n)^(-1/2)` per class.
    pub scale_factors: Vec<f64>,
}

/// Which moment estimates feed the scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentSource {
    /// The fitted James-Stein estimates (production path).
    Shrunk,
    /// Raw pooled moments with no shrinkage. Exposed for oracle tests;
    /// requires more residual degrees of freedom than features.
    Empirical,
}

/// Computes the score table of a fitted model from its shrunk moments.
pub fn compute_scores(model: &ShrinkageModel) -> Result<ScoreTable> {
    let k = model.n_classes();
    let p = model.n_features();
    let n = model.n_samples();
    let counts = model.class_counts();

    let mut scale_factors = Vec::with_capacity(k);
    for &nk in counts {
        if nk == n {
            return Err(Error::InvalidArgument(
                "score scale undefined when one class holds every sample".into(),
            ));
        }
        scale_factors.push((1.0 / nk as f64 - 1.0 / n as f64).powf(-0.5));
    }

    let inv_sd = model.variances().inv_sqrt();
    let mut t_scores = Array2::<f64>::zeros((k, p));
    for (j, &sf) in scale_factors.iter().enumerate() {
        let diff = (&model.class_means().row(j) - &model.pooled_mean()) * &inv_sd;
        let row = diff * sf;
        t_scores.row_mut(j).assign(&row);
    }
    let cat_scores = match model.correlation() {
        Some(corr) => corr.apply_inv_sqrt_rows(t_scores.view())?,
        None => t_scores.clone(),
    };
    let (summary, pam_summary) = summaries_of(&t_scores, &cat_scores);
    Ok(ScoreTable {
        class_names: model.class_names().to_vec(),
        feature_ids: model.feature_ids().to_vec(),
        t_scores,
        cat_scores,
        summary,
        pam_summary,
        scale_factors,
    })
}

/// Score table straight from data, optionally with raw pooled moments
/// instead of the shrunk ones.
pub fn compute_scores_from(data: &LabeledDataset, source: MomentSource) -> Result<ScoreTable> {
    match source {
        MomentSource::Shrunk => {
            let model = crate::model::fit(data, crate::model::Mode::Lda)?;
            compute_scores(&model)
        }
        MomentSource::Empirical => empirical_scores(data),
    }
}

fn empirical_scores(data: &LabeledDataset) -> Result<ScoreTable> {
    let labels = data.labels();
    let stats = crate::shrinkage::class_center(data.matrix(), labels)?;
    let k = stats.counts.len();
    let n = data.n_samples();
    let v = crate::shrinkage::pooled_variances(stats.centered.view(), k)?;
    let corr = crate::shrinkage::shrink_correlations_with_lambda(data.matrix(), labels, 0.0)?;

    let mut pooled = Array1::<f64>::zeros(data.n_features());
    for (j, mean) in stats.means.outer_iter().enumerate() {
        pooled.scaled_add(stats.counts[j] as f64 / n as f64, &mean);
    }
    let inv_sd: Array1<f64> = v.iter().map(|vi| 1.0 / vi.sqrt()).collect();
    let mut scale_factors = Vec::with_capacity(k);
    let mut t_scores = Array2::<f64>::zeros((k, data.n_features()));
    for j in 0..k {
        let sf = (1.0 / stats.counts[j] as f64 - 1.0 / n as f64).powf(-0.5);
        scale_factors.push(sf);
        let row = (&stats.means.row(j) - &pooled) * &inv_sd * sf;
        t_scores.row_mut(j).assign(&row);
    }
    let cat_scores = corr.apply_inv_sqrt_rows(t_scores.view())?;
    let (summary, pam_summary) = summaries_of(&t_scores, &cat_scores);
    Ok(ScoreTable {
        class_names: data.class_names().to_vec(),
        feature_ids: data.feature_ids().to_vec(),
        t_scores,
        cat_scores,
        summary,
        pam_summary,
        scale_factors,
    })
}

/// Recomputes the two per-feature summaries from a table.
pub fn summarize(table: &ScoreTable) -> (Vec<f64>, Vec<f64>) {
    summaries_of(&table.t_scores, &table.cat_scores)
}

fn summaries_of(t_scores: &Array2<f64>, cat_scores: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    let p = t_scores.ncols();
    let mut summary = vec![0.0f64; p];
    let mut pam = vec![0.0f64; p];
    for i in 0..p {
        for j in 0..t_scores.nrows() {
            summary[i] += cat_scores[(j, i)].powi(2);
            pam[i] = pam[i].max(t_scores[(j, i)].abs());
        }
    }
    (summary, pam)
}

impl ScoreTable {
    /// Fdr estimate over this table's features, as used by the selection
    /// pipeline.
    ///
    /// Two-class tables use the signed decorrelated scores under a
    /// symmetric zero-centered empirical null with two-sided p-values:
    /// the two-class summary is a single squared score (a scaled
    /// one-degree chi-square), and the cube-root map cannot normalize
    /// that shape. Multiclass tables use the cube-root-normalized summary
    /// scores with the location-scale empirical null.
    pub fn fdr_estimate(&self) -> Result<crate::selection::FdrEstimate> {
        if self.class_names.len() == 2 {
            let signed: Vec<f64> = self.cat_scores.row(0).to_vec();
            crate::selection::estimate_fdr_symmetric(&signed)
        } else {
            let z =
                crate::selection::normalize_scores(&self.summary, self.class_names.len() as f64)?;
            crate::selection::estimate_fdr(&z)
        }
    }

    /// Writes the table as delimited text with the fixed column schema:
    /// feature id, per-class t, per-class cat, S, S'.
    pub fn write_tsv<W: Write + ?Sized>(&self, w: &mut W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        write!(w, "feature_id")?;
        for c in &self.class_names {
            write!(w, "\tt.{c}")?;
        }
        for c in &self.class_names {
            write!(w, "\tcat.{c}")?;
        }
        writeln!(w, "\tscore\tmax_t")?;
        for (i, id) in self.feature_ids.iter().enumerate() {
            write!(w, "{id}")?;
            for j in 0..self.class_names.len() {
                write!(w, "\t{}", self.t_scores[(j, i)])?;
            }
            for j in 0..self.class_names.len() {
                write!(w, "\t{}", self.cat_scores[(j, i)])?;
            }
            writeln!(w, "\t{}\t{}", self.summary[i], self.pam_summary[i])?;
        }
        Ok(())
    }

    /// Feature indices sorted by decreasing summary score.
    pub fn ranking_by_summary(&self) -> Vec<usize> {
        rank_descending(&self.summary)
    }

    /// Feature indices sorted by decreasing max-|t| criterion.
    pub fn ranking_by_max_t(&self) -> Vec<usize> {
        rank_descending(&self.pam_summary)
    }
}

fn rank_descending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}
