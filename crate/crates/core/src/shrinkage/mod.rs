//! Analytic James-Stein shrinkage estimators.
//!
//! Three estimators, each a convex combination of an empirical estimate
//! with a low-variance target, with the intensity chosen in closed form:
//!
//! * correlations shrink toward zero (identity target),
//! * variances shrink toward their median,
//! * class frequencies shrink toward the uniform distribution.
//!
//! Correlations and variances are pooled within-class moments: data are
//! centered per class and the unbiased denominator is `n - K`. The shrunk
//! correlation matrix is never materialized for large p; it is held in a
//! low-rank form that applies `R^(-1/2)` and `R^(-1)` in O(n^2 p) time.

mod lowrank;

pub use lowrank::EigenCache;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three estimated shrinkage intensities, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageIntensities {
    pub lambda_corr: f64,
    pub lambda_var: f64,
    pub lambda_freq: f64,
}

/// Pooled within-class variances shrunk toward their median.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShrunkVariances {
    /// Shrunk variance per feature.
    pub values: Vec<f64>,
    pub lambda_var: f64,
    /// The shrinkage target: the median of the empirical variances.
    pub median_target: f64,
}

impl ShrunkVariances {
    /// `1 / sqrt(v_i)` for each feature.
    pub fn inv_sqrt(&self) -> Array1<f64> {
        self.values.iter().map(|v| 1.0 / v.sqrt()).collect()
    }
}

/// Class frequencies shrunk toward the uniform distribution `1/K`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShrunkFrequencies {
    pub values: Vec<f64>,
    pub lambda_freq: f64,
}

/// The shrunk correlation matrix `R = (1 - lambda) R_emp + lambda I`,
/// held implicitly through the standardized data.
///
/// `R` is symmetric positive definite whenever `lambda > 0`, with all
/// eigenvalues at least `lambda`, and its diagonal is exactly one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShrunkCorrelation {
    lambda: f64,
    /// Per-class-centered observations divided by the pooled standard
    /// deviation, so `R_emp = X'X / df`.
    standardized: Array2<f64>,
    df: usize,
    cache: EigenCache,
}

pub(crate) struct ClassStats {
    pub counts: Vec<usize>,
    pub means: Array2<f64>,
    pub centered: Array2<f64>,
}

/// Removes per-class means. Labels must be 0-based and every class in
/// `0..max+1` must be present.
pub(crate) fn class_center(data: ArrayView2<'_, f64>, labels: &[usize]) -> Result<ClassStats> {
    let (n, p) = data.dim();
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument("empty data matrix".into()));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::ClassTooSmall {
            label: empty.to_string(),
            got: 0,
            needed: 1,
        });
    }
    let mut means = Array2::<f64>::zeros((k, p));
    for (row, &l) in labels.iter().enumerate() {
        means.row_mut(l).scaled_add(1.0, &data.row(row));
    }
    for (j, mut row) in means.outer_iter_mut().enumerate() {
        row.mapv_inplace(|v| v / counts[j] as f64);
    }
    let mut centered = data.to_owned();
    for (row, &l) in labels.iter().enumerate() {
        let mut r = centered.row_mut(row);
        r -= &means.row(l);
    }
    Ok(ClassStats {
        counts,
        means,
        centered,
    })
}

/// Pooled within-class variances with denominator `n - K`.
pub(crate) fn pooled_variances(centered: ArrayView2<'_, f64>, k: usize) -> Result<Vec<f64>> {
    let n = centered.nrows();
    if n <= k {
        return Err(Error::TooFewSamples {
            needed: k + 1,
            got: n,
        });
    }
    let df = (n - k) as f64;
    let v: Vec<f64> = centered
        .columns()
        .into_iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>() / df)
        .collect();
    if let Some(idx) = v.iter().position(|&vi| vi == 0.0) {
        return Err(Error::ConstantFeature { index: idx });
    }
    Ok(v)
}

/// Estimates the shrunk correlation matrix from raw data.
///
/// The intensity is `min(1, sum Var(r_ij) / sum r_ij^2)` over off-diagonal
/// pairs; a zero denominator (p = 1, or exactly orthogonal residuals)
/// forces `lambda = 1`, the pure identity target.
pub fn shrink_correlations(
    data: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<ShrunkCorrelation> {
    ShrunkCorrelation::fit(data, labels, None)
}

/// Same as [`shrink_correlations`] with the intensity forced, bypassing
/// estimation. Intended for diagnostics and oracle tests.
pub fn shrink_correlations_with_lambda(
    data: ArrayView2<'_, f64>,
    labels: &[usize],
    lambda: f64,
) -> Result<ShrunkCorrelation> {
    ShrunkCorrelation::fit(data, labels, Some(lambda))
}

impl ShrunkCorrelation {
    fn fit(data: ArrayView2<'_, f64>, labels: &[usize], forced: Option<f64>) -> Result<Self> {
        let n = data.nrows();
        if n < 3 {
            return Err(Error::TooFewSamples { needed: 3, got: n });
        }
        let stats = class_center(data, labels)?;
        let k = stats.counts.len();
        let v = pooled_variances(stats.centered.view(), k)?;
        let df = n - k;
        let mut xs = stats.centered;
        let inv_sd: Vec<f64> = v.iter().map(|vi| 1.0 / vi.sqrt()).collect();
        for mut row in xs.rows_mut() {
            for (x, s) in row.iter_mut().zip(&inv_sd) {
                *x *= s;
            }
        }
        let lambda = match forced {
            Some(l) => {
                if !(0.0..=1.0).contains(&l) {
                    return Err(Error::InvalidArgument(format!(
                        "correlation shrinkage intensity {l} outside [0, 1]"
                    )));
                }
                l
            }
            None => estimate_lambda_corr(xs.view(), df),
        };
        let cache = EigenCache::build(xs.view(), df);
        Ok(Self {
            lambda,
            standardized: xs,
            df,
            cache,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Feature dimension p.
    pub fn dim(&self) -> usize {
        self.standardized.ncols()
    }

    /// The standardized residual matrix backing the implicit representation.
    pub fn standardized_data(&self) -> ArrayView2<'_, f64> {
        self.standardized.view()
    }

    /// A copy with a different intensity over the same empirical
    /// correlations. The eigen factorization is reused; only the spectral
    /// shift changes.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidArgument(format!(
                "correlation shrinkage intensity {lambda} outside [0, 1]"
            )));
        }
        Ok(Self {
            lambda,
            standardized: self.standardized.clone(),
            df: self.df,
            cache: self.cache.clone(),
        })
    }

    fn ensure_invertible(&self) -> Result<()> {
        if self.lambda > 0.0 || self.cache.is_full_rank(self.dim()) {
            Ok(())
        } else {
            Err(Error::SingularCorrelation)
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {len} against correlation of dimension {}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Applies `R^(-1/2)` to a vector through the low-rank factorization.
    pub fn apply_inv_sqrt(&self, v: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_dim(v.len())?;
        self.ensure_invertible()?;
        Ok(self.cache.apply_power(self.lambda, -0.5, v))
    }

    /// Applies `R^(-1)` to a vector.
    pub fn apply_inverse(&self, v: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_dim(v.len())?;
        self.ensure_invertible()?;
        Ok(self.cache.apply_power(self.lambda, -1.0, v))
    }

    /// Applies `R^(-1/2)` to every row of a matrix.
    pub fn apply_inv_sqrt_rows(&self, m: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros(m.raw_dim());
        for (row, mut dst) in m.rows().into_iter().zip(out.rows_mut()) {
            dst.assign(&self.apply_inv_sqrt(row)?);
        }
        Ok(out)
    }

    /// Materializes the dense p×p shrunk correlation matrix.
    ///
    /// Off-diagonal entries are `(1 - lambda) r_ij`; the diagonal is set to
    /// exactly one. Quadratic in p; meant for small instances and oracles.
    pub fn materialize(&self) -> Array2<f64> {
        let p = self.dim();
        let scale = (1.0 - self.lambda) / self.df as f64;
        let mut r = self.standardized.t().dot(&self.standardized);
        r.mapv_inplace(|x| x * scale);
        for i in 0..p {
            r[(i, i)] = 1.0;
        }
        r
    }

    /// Dense-eigendecomposition route for `R^(-1/2) v`.
    ///
    /// Independent of the low-rank path; kept as the oracle side of the
    /// fast/dense pair. Cost O(p^3).
    pub fn apply_inv_sqrt_dense(&self, v: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_dim(v.len())?;
        let r = self.materialize();
        lowrank::dense_power(&r, -0.5, v)
    }

    /// Eigenvalues of the materialized matrix, via the cached factorization.
    /// The spectrum is `(1 - lambda) e_i + lambda` on the data range and
    /// `lambda` on its orthogonal complement.
    pub fn spectrum_bounds(&self) -> (f64, f64) {
        self.cache.spectrum_bounds(self.lambda, self.dim())
    }
}

fn estimate_lambda_corr(xs: ArrayView2<'_, f64>, df: usize) -> f64 {
    let (n, p) = xs.dim();
    if p == 1 {
        return 1.0;
    }
    let nf = n as f64;
    // Gram matrix of samples: G_kl = sum_i xs_ki xs_li.
    let gram = xs.dot(&xs.t());
    let gram_frob2: f64 = gram.iter().map(|g| g * g).sum();
    let colsq2: f64 = xs
        .columns()
        .into_iter()
        .map(|c| {
            let s: f64 = c.iter().map(|x| x * x).sum();
            s * s
        })
        .sum();
    // sum over samples of ( (sum_i xs_ki^2)^2 - sum_i xs_ki^4 )
    let sum_w2: f64 = (0..n)
        .map(|k| {
            let row = xs.row(k);
            let sq: f64 = gram[(k, k)];
            let quart: f64 = row.iter().map(|x| x.powi(4)).sum();
            sq * sq - quart
        })
        .sum();
    let offdiag_cross = gram_frob2 - colsq2; // sum_{i != j} (sum_k w_kij)^2
    let var_sum = nf / (nf - 1.0).powi(3) * (sum_w2 - offdiag_cross / nf);
    let r2_sum = offdiag_cross / (df as f64 * df as f64);
    if r2_sum <= 0.0 {
        1.0
    } else {
        (var_sum / r2_sum).clamp(0.0, 1.0)
    }
}

/// Estimates pooled variances and shrinks them toward their median.
pub fn shrink_variances(data: ArrayView2<'_, f64>, labels: &[usize]) -> Result<ShrunkVariances> {
    let stats = class_center(data, labels)?;
    let k = stats.counts.len();
    let v = pooled_variances(stats.centered.view(), k)?;
    let n = data.nrows() as f64;
    let median = median_of(&v);
    let var_sum: f64 = stats
        .centered
        .columns()
        .into_iter()
        .map(|c| {
            let q: Vec<f64> = c.iter().map(|x| x * x).collect();
            let qbar = q.iter().sum::<f64>() / n;
            n / (n - 1.0).powi(3) * q.iter().map(|qi| (qi - qbar).powi(2)).sum::<f64>()
        })
        .sum();
    let dev_sum: f64 = v.iter().map(|vi| (vi - median).powi(2)).sum();
    let lambda = if dev_sum <= 0.0 {
        1.0
    } else {
        (var_sum / dev_sum).clamp(0.0, 1.0)
    };
    // Clamping keeps each value inside [v_i, median] exactly, which the
    // plain convex combination can miss by an ulp at the endpoints.
    let values = v
        .iter()
        .map(|vi| (lambda * median + (1.0 - lambda) * vi).clamp(vi.min(median), vi.max(median)))
        .collect();
    Ok(ShrunkVariances {
        values,
        lambda_var: lambda,
        median_target: median,
    })
}

/// Shrinks empirical class frequencies `n_j / n` toward the uniform `1/K`.
pub fn shrink_frequencies(class_counts: &[usize]) -> Result<ShrunkFrequencies> {
    let k = class_counts.len();
    if k < 2 {
        return Err(Error::TooFewClasses { got: k });
    }
    if let Some(j) = class_counts.iter().position(|&c| c == 0) {
        return Err(Error::ClassTooSmall {
            label: j.to_string(),
            got: 0,
            needed: 1,
        });
    }
    let n: usize = class_counts.iter().sum();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let nf = n as f64;
    let kf = k as f64;
    let freqs: Vec<f64> = class_counts.iter().map(|&c| c as f64 / nf).collect();
    let numerator = 1.0 - freqs.iter().map(|f| f * f).sum::<f64>();
    let denominator = (nf - 1.0) * freqs.iter().map(|f| (1.0 / kf - f).powi(2)).sum::<f64>();
    let lambda = if denominator <= 0.0 {
        1.0
    } else {
        (numerator / denominator).clamp(0.0, 1.0)
    };
    let uniform = 1.0 / kf;
    let values = freqs
        .iter()
        .map(|f| (lambda * uniform + (1.0 - lambda) * f).clamp(f.min(uniform), f.max(uniform)))
        .collect();
    Ok(ShrunkFrequencies {
        values,
        lambda_freq: lambda,
    })
}

fn median_of(v: &[f64]) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

#[cfg(test)]
mod tests;
