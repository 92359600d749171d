//! Training and prediction for the pooled-centroid discriminant.
//!
//! The discriminant score of class k at a test vector x is
//!
//! ```text
//! D_k(x) = w_k' d_k(x) + log pi_k
//! w_k    = R^(-1/2) V^(-1/2) (mu_k - mu_pool)
//! d_k(x) = R^(-1/2) V^(-1/2) (x - (mu_k + mu_pool)/2)
//! ```
//!
//! which equals the classic linear discriminant score minus a
//! class-independent pooled term, so the argmax is unchanged. Prediction
//! uses a cached linear form `D_k(x) = b_k' x + c_k`; the explicit
//! two-apply construction is exercised by the test oracles.
//!
//! In DDA mode the correlation factor is the identity and the model
//! reduces to diagonal (naive Bayes) discriminant analysis. Centroids are
//! never shrunk; only variances, correlations, and priors are.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::scores::ScoreTable;
use crate::shrinkage::{
    shrink_correlations, shrink_frequencies, shrink_variances, ShrinkageIntensities,
    ShrunkCorrelation, ShrunkFrequencies, ShrunkVariances,
};

/// Largest feature count for which the dense reference route may
/// materialize the p×p covariance.
pub const DENSE_LIMIT: usize = 500;

const MODEL_FORMAT: &str = "shrinkda.model";
const MODEL_VERSION: u32 = 1;

/// Whether the covariance keeps correlations (LDA) or assumes none (DDA).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Lda,
    Dda,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Lda => "lda",
            Mode::Dda => "dda",
        })
    }
}

/// A trained discriminant model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShrinkageModel {
    mode: Mode,
    class_names: Vec<String>,
    class_counts: Vec<usize>,
    /// K×p empirical class centroids.
    class_means: Array2<f64>,
    /// Class-count-weighted average of the centroids.
    pooled_mean: Array1<f64>,
    variances: ShrunkVariances,
    /// `None` in DDA mode (identity correlation).
    correlation: Option<ShrunkCorrelation>,
    priors: ShrunkFrequencies,
    feature_ids: Vec<String>,
    /// Original-space feature indices when the model was fit on a subset.
    selected_features: Option<Vec<usize>>,
    /// K×p feature weight vectors w_k.
    weights: Array2<f64>,
    /// Cached linear form of the discriminant scores.
    coefficients: Array2<f64>,
    intercepts: Vec<f64>,
}

/// Per-sample prediction output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscriminantOutput {
    /// Discriminant score per class.
    pub scores: Vec<f64>,
    /// Softmax of the scores; sums to one.
    pub posteriors: Vec<f64>,
    /// Argmax class index; ties break to the lowest index.
    pub predicted: usize,
}

/// Fits a shrinkage discriminant model.
pub fn fit(data: &LabeledDataset, mode: Mode) -> Result<ShrinkageModel> {
    let n = data.n_samples();
    let k = data.n_classes();
    let p = data.n_features();
    let counts = data.class_counts();
    for (j, &c) in counts.iter().enumerate() {
        if c < 2 {
            return Err(Error::ClassTooSmall {
                label: data.class_names()[j].clone(),
                got: c,
                needed: 2,
            });
        }
    }
    if mode == Mode::Lda && n < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: n });
    }

    let labels = data.labels();
    let matrix = data.matrix();
    let stats = crate::shrinkage::class_center(matrix, labels)?;
    let class_means = stats.means;
    let mut pooled_mean = Array1::<f64>::zeros(p);
    for (j, mean) in class_means.outer_iter().enumerate() {
        pooled_mean.scaled_add(counts[j] as f64 / n as f64, &mean);
    }

    let variances = shrink_variances(matrix, labels)?;
    let correlation = match mode {
        Mode::Lda => Some(shrink_correlations(matrix, labels)?),
        Mode::Dda => None,
    };
    let priors = shrink_frequencies(&counts)?;

    let mut model = ShrinkageModel {
        mode,
        class_names: data.class_names().to_vec(),
        class_counts: counts,
        class_means,
        pooled_mean,
        variances,
        correlation,
        priors,
        feature_ids: data.feature_ids().to_vec(),
        selected_features: None,
        weights: Array2::zeros((k, p)),
        coefficients: Array2::zeros((k, p)),
        intercepts: vec![0.0; k],
    };
    model.refresh_predictor()?;
    Ok(model)
}

/// Fits a model restricted to a strictly increasing feature subset.
///
/// Shrinkage is re-estimated on the submatrix: restricting the model is a
/// refit, not a slice of full-model parameters, because the decorrelation
/// operator of a subset differs from the restricted full-space operator.
pub fn fit_selected(
    data: &LabeledDataset,
    mode: Mode,
    indices: &[usize],
) -> Result<ShrinkageModel> {
    let sub = data.subset_features(indices)?;
    let mut model = fit(&sub, mode)?;
    model.selected_features = Some(indices.to_vec());
    Ok(model)
}

impl ShrinkageModel {
    fn refresh_predictor(&mut self) -> Result<()> {
        let k = self.n_classes();
        let inv_sd = self.variances.inv_sqrt();
        let mut weights = Array2::<f64>::zeros((k, self.n_features()));
        let mut coefficients = Array2::<f64>::zeros((k, self.n_features()));
        let mut intercepts = vec![0.0; k];
        for (j, intercept) in intercepts.iter_mut().enumerate() {
            let diff = (&self.class_means.row(j) - &self.pooled_mean) * &inv_sd;
            let (w, a) = match &self.correlation {
                Some(corr) => (
                    corr.apply_inv_sqrt(diff.view())?,
                    corr.apply_inverse(diff.view())?,
                ),
                None => (diff.clone(), diff.clone()),
            };
            weights.row_mut(j).assign(&w);
            // D_j(x) = a_j' V^{-1/2} (x - (mu_j + mu_pool)/2) + log pi_j
            let b = &a * &inv_sd;
            let midpoint = (&self.class_means.row(j) + &self.pooled_mean) * 0.5;
            *intercept = self.priors.values[j].ln() - b.dot(&midpoint);
            coefficients.row_mut(j).assign(&b);
        }
        self.weights = weights;
        self.coefficients = coefficients;
        self.intercepts = intercepts;
        Ok(())
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_features(&self) -> usize {
        self.class_means.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.class_counts.iter().sum()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn class_means(&self) -> ArrayView2<'_, f64> {
        self.class_means.view()
    }

    pub fn pooled_mean(&self) -> ArrayView1<'_, f64> {
        self.pooled_mean.view()
    }

    pub fn variances(&self) -> &ShrunkVariances {
        &self.variances
    }

    /// The shrunk correlation, or `None` for the identity (DDA).
    pub fn correlation(&self) -> Option<&ShrunkCorrelation> {
        self.correlation.as_ref()
    }

    pub fn priors(&self) -> &ShrunkFrequencies {
        &self.priors
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    pub fn selected_features(&self) -> Option<&[usize]> {
        self.selected_features.as_deref()
    }

    /// The three fitted shrinkage intensities. `lambda_corr` is zero in
    /// DDA mode where no correlation is estimated.
    pub fn intensities(&self) -> ShrinkageIntensities {
        ShrinkageIntensities {
            lambda_corr: self.correlation.as_ref().map_or(0.0, |c| c.lambda()),
            lambda_var: self.variances.lambda_var,
            lambda_freq: self.priors.lambda_freq,
        }
    }

    /// K×p matrix of feature weight vectors w_k.
    pub fn feature_weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    /// Discriminant scores, posteriors, and the predicted class for one
    /// sample of the model's feature dimension.
    pub fn discriminant_scores(&self, x: ArrayView1<'_, f64>) -> Result<DiscriminantOutput> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "sample of length {} against model with p={}",
                x.len(),
                self.n_features()
            )));
        }
        let mut scores = self.coefficients.dot(&x);
        scores += &Array1::from(self.intercepts.clone());
        Ok(output_from_scores(scores.to_vec()))
    }

    /// Row-wise predictions for a whole matrix.
    pub fn predict(&self, data: ArrayView2<'_, f64>) -> Result<Vec<DiscriminantOutput>> {
        if data.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "matrix with {} columns against model with p={}",
                data.ncols(),
                self.n_features()
            )));
        }
        let mut scores = data.dot(&self.coefficients.t());
        let intercepts = Array1::from(self.intercepts.clone());
        for mut row in scores.rows_mut() {
            row += &intercepts;
        }
        Ok(scores
            .axis_iter(Axis(0))
            .map(|row| output_from_scores(row.to_vec()))
            .collect())
    }

    /// Direct linear discriminant scores from the materialized covariance:
    /// `d_k = mu_k' S^(-1) x - mu_k' S^(-1) mu_k / 2 + log pi_k`.
    ///
    /// A slow reference for the pooled-centroid scores; they differ by a
    /// class-independent constant. Refuses p above [`DENSE_LIMIT`] to guard
    /// against accidental production use.
    pub fn reference_discriminant(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        let p = self.n_features();
        if p > DENSE_LIMIT {
            return Err(Error::FeatureLimit {
                max: DENSE_LIMIT,
                got: p,
            });
        }
        if x.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "sample of length {} against model with p={p}",
                x.len()
            )));
        }
        let sd: Vec<f64> = self.variances.values.iter().map(|v| v.sqrt()).collect();
        let mut sigma = DMatrix::<f64>::zeros(p, p);
        match &self.correlation {
            Some(corr) => {
                let r = corr.materialize();
                for i in 0..p {
                    for j in 0..p {
                        sigma[(i, j)] = sd[i] * r[(i, j)] * sd[j];
                    }
                }
            }
            None => {
                for i in 0..p {
                    sigma[(i, i)] = self.variances.values[i];
                }
            }
        }
        let chol = sigma.cholesky().ok_or(Error::SingularCorrelation)?;
        let solve = |v: DVector<f64>| chol.solve(&v);
        let xv = DVector::from_iterator(p, x.iter().cloned());
        let sx = solve(xv);
        let mut out = Vec::with_capacity(self.n_classes());
        for j in 0..self.n_classes() {
            let mu = DVector::from_iterator(p, self.class_means.row(j).iter().cloned());
            let smu = solve(mu.clone());
            out.push(mu.dot(&sx) - 0.5 * mu.dot(&smu) + self.priors.values[j].ln());
        }
        Ok(out)
    }

    /// Serializes the model as a versioned, self-describing JSON document.
    /// Floats round-trip exactly, so save/load/predict is bit-identical.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_json(&mut w)
    }

    pub fn write_json<W: Write>(&self, w: &mut W) -> Result<()> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        serde_json::to_writer(&mut *w, &file).map_err(|e| Error::Model(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let file: ModelFile =
            serde_json::from_reader(r).map_err(|e| Error::Model(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Model(format!(
                "unexpected format {:?}, wanted {MODEL_FORMAT:?}",
                file.format
            )));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::Model(format!(
                "unsupported version {} (this build reads {MODEL_VERSION})",
                file.version
            )));
        }
        Ok(file.model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: ShrinkageModel,
}

fn output_from_scores(scores: Vec<f64>) -> DiscriminantOutput {
    let predicted = argmax_lowest(&scores);
    let max = scores[predicted];
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    let posteriors = exp.iter().map(|e| e / total).collect();
    DiscriminantOutput {
        scores,
        posteriors,
        predicted,
    }
}

/// First index attaining the maximum.
pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Hotelling-type set statistic for two-class score tables: the sum of the
/// squared cat scores over a feature set. Additive over disjoint sets.
pub fn hotelling_t2(scores: &ScoreTable, feature_set: &[usize]) -> Result<f64> {
    if scores.class_names.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "set statistic needs exactly two classes, got {}",
            scores.class_names.len()
        )));
    }
    if feature_set.is_empty() {
        return Err(Error::InvalidArgument("empty feature set".into()));
    }
    let p = scores.cat_scores.ncols();
    let mut total = 0.0;
    for &i in feature_set {
        if i >= p {
            return Err(Error::DimensionMismatch(format!(
                "feature index {i} out of range for p={p}"
            )));
        }
        total += scores.cat_scores[(0, i)].powi(2);
    }
    Ok(total)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop, clippy::excessive_precision)]
pub(crate) mod tests {
    use super::*;
    use crate::dataset::LabeledDataset;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn assert_close(a: f64, b: f64, tol: f64) {
        let scale = 1.0 + a.abs().max(b.abs());
        assert!(
            (a - b).abs() <= tol * scale,
            "{a} vs {b} differ by {}",
            (a - b).abs()
        );
    }

    pub(crate) fn dataset_from(matrix: Array2<f64>, labels: &[usize], k: usize) -> LabeledDataset {
        let n = matrix.nrows();
        let p = matrix.ncols();
        LabeledDataset::new(
            matrix,
            (0..p).map(|i| format!("f{i}")).collect(),
            (0..n).map(|i| format!("s{i}")).collect(),
            labels.to_vec(),
            (0..k).map(|j| format!("c{j}")).collect(),
        )
        .unwrap()
    }

    /// 10x4 two-class instance with partial shrinkage on both the
    /// correlations and the variances; expectations from the
    /// direct-summation oracle.
    pub(crate) fn two_class_instance() -> LabeledDataset {
        let matrix = array![
            [1.0, 2.5, 1.0, 0.0],
            [2.0, 4.0, 0.0, 1.0],
            [3.0, 6.5, 2.0, 5.0],
            [0.0, 0.5, 3.0, 7.0],
            [4.0, 8.0, 4.0, 11.0],
            [3.0, 6.0, 2.0, 6.0],
            [4.0, 8.5, 3.0, 8.0],
            [5.0, 10.0, 1.0, 3.0],
            [6.0, 12.5, 4.0, 10.0],
            [7.0, 14.0, 5.0, 13.0],
        ];
        dataset_from(matrix, &[0, 0, 0, 0, 0, 1, 1, 1, 1, 1], 2)
    }

    pub(crate) fn three_class_instance() -> LabeledDataset {
        let matrix = array![
            [1.0, 1.5, 2.0],
            [2.0, 2.0, 1.0],
            [0.0, 0.5, 0.0],
            [3.0, 3.5, 4.0],
            [4.0, 4.0, 3.0],
            [3.0, 3.0, 5.0],
            [6.0, 6.5, 7.0],
            [7.0, 7.0, 6.0],
            [6.0, 6.0, 8.0],
        ];
        dataset_from(matrix, &[0, 0, 0, 1, 1, 1, 2, 2, 2], 3)
    }

    #[test]
    fn frozen_two_class_fit() {
        let data = two_class_instance();
        let model = fit(&data, Mode::Lda).unwrap();
        let lams = model.intensities();
        assert_close(lams.lambda_corr, 0.12776355464692057, 1e-10);
        assert_close(lams.lambda_var, 0.16998163024922192, 1e-10);
        assert_eq!(lams.lambda_freq, 1.0);

        let expected_means = array![[2.0, 4.3, 2.0, 4.8], [5.0, 10.2, 3.0, 8.0]];
        for j in 0..2 {
            for i in 0..4 {
                assert_close(model.class_means()[(j, i)], expected_means[(j, i)], 1e-12);
            }
        }
        let expected_pool = [3.5, 7.25, 2.5, 6.4];
        for i in 0..4 {
            assert_close(model.pooled_mean()[i], expected_pool[i], 1e-12);
        }
        let expected_v = [
            3.1013100170066226,
            8.973689982993378,
            3.1013100170066226,
            15.427082807805679,
        ];
        for i in 0..4 {
            assert_close(model.variances().values[i], expected_v[i], 1e-10);
        }
        assert_eq!(model.priors().values, vec![0.5, 0.5]);

        let expected_w0 = [
            -0.4839030917242779,
            -0.8596158570460951,
            0.04043161457052474,
            -0.20334392173293026,
        ];
        for i in 0..4 {
            assert_close(model.feature_weights()[(0, i)], expected_w0[i], 1e-9);
            assert_close(model.feature_weights()[(1, i)], -expected_w0[i], 1e-9);
        }
    }

    #[test]
    fn frozen_two_class_discriminants() {
        let data = two_class_instance();
        let model = fit(&data, Mode::Lda).unwrap();
        let x = array![2.0, 5.0, 2.0, 4.0];
        let out = model.discriminant_scores(x.view()).unwrap();
        assert_close(out.scores[0], -0.39029860248069004, 1e-9);
        assert_close(out.scores[1], -2.0120808484671153, 1e-9);
        let d = model.reference_discriminant(x.view()).unwrap();
        assert_close(d[0], 0.8230015655187605, 1e-9);
        assert_close(d[1], -0.7987806804676659, 1e-9);
        // Pooled-centroid and direct scores differ by a class-independent
        // constant and agree on the argmax.
        let c0 = out.scores[0] - d[0];
        let c1 = out.scores[1] - d[1];
        assert_close(c0, -1.2133001679994506, 1e-9);
        assert!((c0 - c1).abs() < 1e-9);
        assert_eq!(out.predicted, argmax_lowest(&d));
    }

    #[test]
    fn frozen_three_class_discriminants() {
        let data = three_class_instance();
        let model = fit(&data, Mode::Lda).unwrap();
        let x = array![5.0, 5.0, 6.0];
        let out = model.discriminant_scores(x.view()).unwrap();
        let expected = [-36.29737412600696, -2.2482602187533898, 0.44907980463320474];
        for (got, want) in out.scores.iter().zip(expected) {
            assert_close(*got, want, 1e-9);
        }
        let d = model.reference_discriminant(x.view()).unwrap();
        let diff: Vec<f64> = out.scores.iter().zip(&d).map(|(a, b)| a - b).collect();
        assert_close(diff[0], -60.491042367639324, 1e-9);
        assert!((diff[0] - diff[1]).abs() < 1e-9);
        assert!((diff[0] - diff[2]).abs() < 1e-9);
        assert_eq!(out.predicted, 2);
    }

    #[test]
    fn identical_class_means_fall_back_to_priors() {
        // Class means are exactly equal, so every weight vector is zero
        // and prediction is driven by the (unequal) priors alone.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..50 {
            rows.push(if i % 2 == 0 { [1.0, 3.0] } else { [3.0, 1.0] });
            labels.push(0);
        }
        for i in 0..30 {
            rows.push(if i % 2 == 0 { [0.0, 4.0] } else { [4.0, 0.0] });
            labels.push(1);
        }
        let matrix = Array2::from_shape_vec((80, 2), rows.concat()).unwrap();
        let data = dataset_from(matrix, &labels, 2);
        let model = fit(&data, Mode::Lda).unwrap();
        assert!(model.feature_weights().iter().all(|&w| w == 0.0));
        assert!(model.priors().values[0] > model.priors().values[1]);
        let out = model.discriminant_scores(array![2.0, 2.0].view()).unwrap();
        assert_eq!(out.predicted, 0);
        assert_close(
            out.scores[0] - out.scores[1],
            (model.priors().values[0] / model.priors().values[1]).ln(),
            1e-12,
        );
        // The direct route agrees: with equal centroids the scores differ
        // by the log prior ratio alone.
        let d = model
            .reference_discriminant(array![2.0, 2.0].view())
            .unwrap();
        assert_close(
            d[0] - d[1],
            (model.priors().values[0] / model.priors().values[1]).ln(),
            1e-10,
        );
    }

    #[test]
    fn unbalanced_two_class_weights_have_count_ratio() {
        // mu_1 - mu_pool = (n_2/n)(mu_1 - mu_2) and mu_2 - mu_pool =
        // -(n_1/n)(mu_1 - mu_2), so the weight rows satisfy
        // w_1 / w_2 = -n_2 / n_1 componentwise.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n1 = 12;
        let n2 = 6;
        let matrix = Array2::from_shape_fn((n1 + n2, 5), |(i, j)| {
            rng.sample::<f64, _>(StandardNormal) + if i < n1 { 0.0 } else { 0.5 + j as f64 * 0.2 }
        });
        let labels: Vec<usize> = (0..n1 + n2).map(|i| usize::from(i >= n1)).collect();
        let data = dataset_from(matrix, &labels, 2);
        let model = fit(&data, Mode::Lda).unwrap();
        let w = model.feature_weights();
        let expected_ratio = -(n2 as f64) / n1 as f64;
        for i in 0..5 {
            assert_close(w[(0, i)] / w[(1, i)], expected_ratio, 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let model = fit(&two_class_instance(), Mode::Lda).unwrap();
        let short = array![1.0, 2.0];
        assert!(matches!(
            model.discriminant_scores(short.view()).unwrap_err(),
            Error::DimensionMismatch(_)
        ));
        let wide = Array2::<f64>::zeros((3, 7));
        assert!(matches!(
            model.predict(wide.view()).unwrap_err(),
            Error::DimensionMismatch(_)
        ));
        assert!(matches!(
            model.reference_discriminant(short.view()).unwrap_err(),
            Error::DimensionMismatch(_)
        ));
    }

    #[test]
    fn balanced_classes_give_exact_uniform_priors() {
        let data = three_class_instance();
        let model = fit(&data, Mode::Lda).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(model.priors().values, vec![third, third, third]);
    }

    #[test]
    fn posterior_normalization_and_argmax_consistency() {
        let data = three_class_instance();
        let model = fit(&data, Mode::Lda).unwrap();
        let out = model
            .discriminant_scores(array![4.0, 4.5, 4.0].view())
            .unwrap();
        let sum: f64 = out.posteriors.iter().sum();
        assert!((sum - 1.0).abs() < 1e-10);
        assert_eq!(out.predicted, argmax_lowest(&out.scores));
        assert_eq!(out.predicted, argmax_lowest(&out.posteriors));
    }

    #[test]
    fn dda_matches_independent_diagonal_gaussian_classifier() {
        use statrs::distribution::{Continuous, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 30;
        let p = 8;
        let matrix = Array2::from_shape_fn((n, p), |(i, j)| {
            let shift = (i % 3) as f64 * (j as f64 / p as f64);
            rng.sample::<f64, _>(StandardNormal) * (1.0 + j as f64 / 4.0) + shift
        });
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let data = dataset_from(matrix, &labels, 3);
        let model = fit(&data, Mode::Dda).unwrap();
        for row in 0..n {
            let x = data.matrix().row(row).to_owned();
            let out = model.discriminant_scores(x.view()).unwrap();
            // Independent route: sum of per-coordinate normal log densities.
            let log_densities: Vec<f64> = (0..3)
                .map(|j| {
                    let mut ll = model.priors().values[j].ln();
                    for i in 0..p {
                        let dist = Normal::new(
                            model.class_means()[(j, i)],
                            model.variances().values[i].sqrt(),
                        )
                        .unwrap();
                        ll += dist.ln_pdf(x[i]);
                    }
                    ll
                })
                .collect();
            assert_eq!(out.predicted, argmax_lowest(&log_densities));
            let d0 = out.scores[0] - log_densities[0];
            for j in 1..3 {
                assert_close(out.scores[j] - log_densities[j], d0, 1e-9);
            }
        }
    }

    #[test]
    fn two_class_score_difference_matches_two_group_form() {
        let data = two_class_instance();
        let model = fit(&data, Mode::Lda).unwrap();
        let corr = model.correlation().unwrap();
        let inv_sd = model.variances().inv_sqrt();
        let mu_diff = (&model.class_means().row(0) - &model.class_means().row(1)) * &inv_sd;
        let omega = corr.apply_inv_sqrt(mu_diff.view()).unwrap();
        for x in [array![2.0, 5.0, 2.0, 4.0], array![4.0, 9.0, 3.0, 8.0]] {
            let mid = (&model.class_means().row(0) + &model.class_means().row(1)) * 0.5;
            let centered = (&x - &mid) * &inv_sd;
            let delta = corr.apply_inv_sqrt(centered.view()).unwrap();
            let expected =
                omega.dot(&delta) + (model.priors().values[0] / model.priors().values[1]).ln();
            let out = model.discriminant_scores(x.view()).unwrap();
            assert_close(out.scores[0] - out.scores[1], expected, 1e-9);
        }
    }

    #[test]
    fn centroids_predict_their_own_class() {
        let data = two_class_instance();
        let model = fit(&data, Mode::Lda).unwrap();
        for j in 0..2 {
            let mu = model.class_means().row(j).to_owned();
            let out = model.discriminant_scores(mu.view()).unwrap();
            assert_eq!(out.predicted, j, "centroid of class {j}");
        }
    }

    #[test]
    fn prediction_survives_feature_rescaling() {
        // Rescaling moves the variance-shrinkage target (the median of the
        // rescaled variances), so scores are not numerically identical;
        // on well-separated inputs the decision must not move.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let data = two_class_instance();
        let model = fit(&data, Mode::Lda).unwrap();
        for trial in 0..10 {
            let scales: Vec<f64> = (0..4).map(|_| rng.gen_range(0.1..10.0)).collect();
            let mut scaled_matrix = data.matrix().to_owned();
            for mut row in scaled_matrix.rows_mut() {
                for (v, s) in row.iter_mut().zip(&scales) {
                    *v *= s;
                }
            }
            let scaled = dataset_from(scaled_matrix, data.labels(), 2);
            let rescaled_model = fit(&scaled, Mode::Lda).unwrap();
            for x in [array![2.0, 5.0, 2.0, 4.0], array![6.0, 13.0, 4.5, 11.0]] {
                let base = model.discriminant_scores(x.view()).unwrap();
                let margin = (base.scores[0] - base.scores[1]).abs();
                assert!(margin > 1e-6, "instance must be well separated");
                let xs: Array1<f64> = x.iter().zip(&scales).map(|(v, s)| v * s).collect();
                let scaled_out = rescaled_model.discriminant_scores(xs.view()).unwrap();
                assert_eq!(base.predicted, scaled_out.predicted, "trial {trial}");
            }
        }
    }

    #[test]
    fn exact_midpoint_ties_break_to_the_lowest_class() {
        let matrix = array![[1.0, 2.0], [3.0, 4.0], [-1.0, -2.0], [-3.0, -4.0],];
        let data = dataset_from(matrix, &[0, 0, 1, 1], 2);
        let model = fit(&data, Mode::Dda).unwrap();
        let out = model.discriminant_scores(array![0.0, 0.0].view()).unwrap();
        assert_eq!(out.scores[0], out.scores[1]);
        assert_eq!(out.predicted, 0);
    }

    #[test]
    fn pooled_mean_is_the_weighted_centroid_average() {
        let data = three_class_instance();
        let model = fit(&data, Mode::Lda).unwrap();
        let grand = data.matrix().sum_axis(ndarray::Axis(0)) / data.n_samples() as f64;
        for i in 0..data.n_features() {
            assert_close(model.pooled_mean()[i], grand[i], 1e-12);
        }
    }

    #[test]
    fn reference_route_refuses_large_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = DENSE_LIMIT + 1;
        let matrix = Array2::from_shape_fn((8, p), |_| rng.sample::<f64, _>(StandardNormal));
        let labels = [0, 0, 0, 0, 1, 1, 1, 1];
        let data = dataset_from(matrix, &labels, 2);
        let model = fit(&data, Mode::Lda).unwrap();
        let x = Array1::zeros(p);
        assert!(matches!(
            model.reference_discriminant(x.view()).unwrap_err(),
            Error::FeatureLimit { .. }
        ));
    }

    #[test]
    fn singleton_class_is_rejected() {
        let matrix = array![[1.0, 2.0], [2.0, 1.0], [5.0, 5.0]];
        let data = dataset_from(matrix, &[0, 0, 1], 2);
        assert!(matches!(
            fit(&data, Mode::Lda).unwrap_err(),
            Error::ClassTooSmall { .. }
        ));
    }

    #[test]
    fn hotelling_statistic_identities() {
        let data = two_class_instance();
        let model = fit(&data, Mode::Lda).unwrap();
        let table = crate::scores::compute_scores(&model).unwrap();

        // Frozen full-set value; equals the scaled Mahalanobis quadratic
        // form between the two centroids.
        let full = hotelling_t2(&table, &[0, 1, 2, 3]).unwrap();
        assert_close(full, 10.160850898279158, 1e-9);

        let single = hotelling_t2(&table, &[2]).unwrap();
        assert_close(single, table.cat_scores[(0, 2)].powi(2), 1e-14);

        let a = hotelling_t2(&table, &[0, 1]).unwrap();
        let b = hotelling_t2(&table, &[2, 3]).unwrap();
        assert_close(a + b, full, 1e-12);

        assert!(hotelling_t2(&table, &[]).is_err());
        assert!(hotelling_t2(&table, &[9]).is_err());
        let three =
            crate::scores::compute_scores(&fit(&three_class_instance(), Mode::Lda).unwrap())
                .unwrap();
        assert!(hotelling_t2(&three, &[0]).is_err());
    }

    #[test]
    fn serialization_roundtrip_is_bit_exact() {
        let data = two_class_instance();
        let model = fit(&data, Mode::Lda).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = ShrinkageModel::load(&path).unwrap();
        for x in [array![2.0, 5.0, 2.0, 4.0], array![0.1, -3.0, 7.25, 1.0e-9]] {
            let a = model.discriminant_scores(x.view()).unwrap();
            let b = loaded.discriminant_scores(x.view()).unwrap();
            for (s1, s2) in a.scores.iter().zip(&b.scores) {
                assert_eq!(s1.to_bits(), s2.to_bits(), "scores must round-trip exactly");
            }
            for (p1, p2) in a.posteriors.iter().zip(&b.posteriors) {
                assert_eq!(p1.to_bits(), p2.to_bits());
            }
        }
        assert_eq!(model.feature_ids(), loaded.feature_ids());
        assert_eq!(model.class_counts(), loaded.class_counts());
    }

    #[test]
    fn model_file_version_is_checked() {
        let data = two_class_instance();
        let model = fit(&data, Mode::Lda).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let bumped = text.replace("\"version\":1", "\"version\":99");
        assert_ne!(text, bumped);
        std::fs::write(&path, bumped).unwrap();
        assert!(matches!(
            ShrinkageModel::load(&path).unwrap_err(),
            Error::Model(_)
        ));
    }

    #[test]
    fn selected_feature_refit_restricts_dimensions() {
        let data = two_class_instance();
        let model = fit_selected(&data, Mode::Lda, &[1, 3]).unwrap();
        assert_eq!(model.n_features(), 2);
        assert_eq!(model.selected_features(), Some(&[1usize, 3][..]));
        assert_eq!(model.feature_ids(), ["f1", "f3"]);
        let out = model.discriminant_scores(array![5.0, 4.0].view()).unwrap();
        assert_eq!(out.scores.len(), 2);
        assert!(fit_selected(&data, Mode::Lda, &[3, 1]).is_err());
    }

    #[test]
    fn pooled_and_direct_scores_agree_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for trial in 0..25 {
            let k = [2, 3, 5][trial % 3];
            let n = 6 * k + (trial % 4) * k;
            let p = 2 + trial % 10;
            let matrix = Array2::from_shape_fn((n, p), |(i, j)| {
                rng.sample::<f64, _>(StandardNormal) + ((i % k) * j) as f64 * 0.3
            });
            let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
            let data = dataset_from(matrix, &labels, k);
            let model = fit(&data, Mode::Lda).unwrap();
            let x: Array1<f64> = (0..p)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let out = model.discriminant_scores(x.view()).unwrap();
            let d = model.reference_discriminant(x.view()).unwrap();
            let c = out.scores[0] - d[0];
            for j in 1..k {
                assert!(
                    (out.scores[j] - d[j] - c).abs() < 1e-9,
                    "trial {trial}: offset not constant"
                );
            }
            assert_eq!(out.predicted, argmax_lowest(&d));
        }
    }
}
