//! Low-rank spectral machinery for the shrunk correlation matrix.
//!
//! With `R = (1 - lambda) X'X/df + lambda I` and the thin factorization
//! `X'X/df = W diag(e) W'`, any matrix power applies as
//!
//! ```text
//! R^a v = lambda^a v + W diag(((1 - lambda) e_i + lambda)^a - lambda^a) W' v
//! ```
//!
//! For n < p the factor comes from the n×n Gram matrix of the samples,
//! so the cost is O(n^2 p) instead of the O(p^3) dense eigendecomposition.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff below which a direction is treated as null.
const RANK_TOL: f64 = 1e-12;

/// Thin eigenfactorization of the empirical correlation matrix restricted
/// to the span of the data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenCache {
    /// p×m orthonormal basis of the data span.
    basis: Array2<f64>,
    /// The m positive eigenvalues of `X'X/df` on that basis, descending.
    eigenvalues: Vec<f64>,
}

impl EigenCache {
    /// Factorizes `xs' xs / df` without forming a p×p matrix when n < p.
    pub(crate) fn build(xs: ArrayView2<'_, f64>, df: usize) -> Self {
        let (n, p) = xs.dim();
        if n <= p {
            Self::from_gram(xs, df)
        } else {
            Self::from_covariance(xs, df)
        }
    }

    fn from_gram(xs: ArrayView2<'_, f64>, df: usize) -> Self {
        let n = xs.nrows();
        let gram = xs.dot(&xs.t());
        let gm = DMatrix::from_row_iterator(n, n, gram.iter().cloned());
        let eig = gm.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let max_ev = eig.eigenvalues[order[0]].max(0.0);
        let cutoff = max_ev * RANK_TOL;
        let kept: Vec<usize> = order
            .into_iter()
            .filter(|&i| eig.eigenvalues[i] > cutoff && eig.eigenvalues[i] > 0.0)
            .collect();
        let m = kept.len();
        let p = xs.ncols();
        let mut basis = Array2::<f64>::zeros((p, m));
        let mut eigenvalues = Vec::with_capacity(m);
        for (col, &i) in kept.iter().enumerate() {
            let g = eig.eigenvalues[i];
            let u: Array1<f64> = eig.eigenvectors.column(i).iter().cloned().collect();
            // w = X' u / sqrt(g) has unit norm and spans the data range.
            let w = xs.t().dot(&u) / g.sqrt();
            basis.column_mut(col).assign(&w);
            eigenvalues.push(g / df as f64);
        }
        Self { basis, eigenvalues }
    }

    fn from_covariance(xs: ArrayView2<'_, f64>, df: usize) -> Self {
        let p = xs.ncols();
        let mut r_emp = xs.t().dot(&xs);
        r_emp.mapv_inplace(|v| v / df as f64);
        let rm = DMatrix::from_row_iterator(p, p, r_emp.iter().cloned());
        let eig = rm.symmetric_eigen();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let max_ev = eig.eigenvalues[order[0]].max(0.0);
        let cutoff = max_ev * RANK_TOL;
        let kept: Vec<usize> = order
            .into_iter()
            .filter(|&i| eig.eigenvalues[i] > cutoff && eig.eigenvalues[i] > 0.0)
            .collect();
        let m = kept.len();
        let mut basis = Array2::<f64>::zeros((p, m));
        let mut eigenvalues = Vec::with_capacity(m);
        for (col, &i) in kept.iter().enumerate() {
            for (row, v) in eig.eigenvectors.column(i).iter().enumerate() {
                basis[(row, col)] = *v;
            }
            eigenvalues.push(eig.eigenvalues[i]);
        }
        Self { basis, eigenvalues }
    }

    pub(crate) fn is_full_rank(&self, p: usize) -> bool {
        self.eigenvalues.len() == p
    }

    /// Applies `R^alpha` for `R = (1 - lambda) R_emp + lambda I`.
    ///
    /// Callers must guarantee invertibility for negative powers
    /// (`lambda > 0`, or a full-rank factorization).
    pub(crate) fn apply_power(
        &self,
        lambda: f64,
        alpha: f64,
        v: ArrayView1<'_, f64>,
    ) -> Array1<f64> {
        let base = if lambda > 0.0 {
            lambda.powf(alpha)
        } else {
            0.0
        };
        let coeffs: Array1<f64> = self
            .eigenvalues
            .iter()
            .map(|&e| ((1.0 - lambda) * e + lambda).powf(alpha) - base)
            .collect();
        let projected = self.basis.t().dot(&v);
        let mut out = self.basis.dot(&(&coeffs * &projected));
        out.scaled_add(base, &v);
        out
    }

    /// Smallest and largest eigenvalue of the shrunk matrix.
    pub(crate) fn spectrum_bounds(&self, lambda: f64, p: usize) -> (f64, f64) {
        let mut lo = if self.eigenvalues.len() < p {
            lambda
        } else {
            f64::INFINITY
        };
        let mut hi = if self.eigenvalues.len() < p {
            lambda
        } else {
            f64::NEG_INFINITY
        };
        for &e in &self.eigenvalues {
            let ev = (1.0 - lambda) * e + lambda;
            lo = lo.min(ev);
            hi = hi.max(ev);
        }
        (lo, hi)
    }
}

/// Dense symmetric power via a full eigendecomposition. Used by the
/// reference/oracle routes only.
pub(crate) fn dense_power(
    matrix: &Array2<f64>,
    alpha: f64,
    v: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    let p = matrix.nrows();
    let m = DMatrix::from_row_iterator(p, p, matrix.iter().cloned());
    let eig = m.symmetric_eigen();
    if alpha < 0.0 && eig.eigenvalues.iter().any(|&e| e <= 0.0) {
        return Err(Error::SingularCorrelation);
    }
    let vn = DVector::from_iterator(p, v.iter().cloned());
    let projected = eig.eigenvectors.transpose() * vn;
    let scaled = DVector::from_iterator(
        p,
        projected
            .iter()
            .zip(eig.eigenvalues.iter())
            .map(|(x, &e)| x * e.powf(alpha)),
    );
    let out = eig.eigenvectors * scaled;
    Ok(out.iter().cloned().collect())
}
