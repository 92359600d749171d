//! Shared helpers for the integration suites: an independent
//! direct-summation oracle for the shrinkage estimators, plus small
//! statistical utilities. Everything here is written with explicit loops,
//! deliberately not reusing the library's linear-algebra paths.

use ndarray::{Array2, ArrayView2};

pub struct OracleShrinkage {
    pub lambda_corr: f64,
    pub lambda_var: f64,
    pub lambda_freq: f64,
    /// Dense shrunk correlation matrix.
    pub corr: Array2<f64>,
    pub variances: Vec<f64>,
    pub variance_median: f64,
    pub frequencies: Vec<f64>,
}

/// Evaluates every shrinkage formula by direct summation.
pub fn oracle_shrinkage(data: ArrayView2<'_, f64>, labels: &[usize]) -> OracleShrinkage {
    let (n, p) = data.dim();
    let k = labels.iter().max().unwrap() + 1;
    let nf = n as f64;
    let df = (n - k) as f64;

    // Per-class means and centered data, by explicit loops.
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let mut means = vec![vec![0.0f64; p]; k];
    for (row, &l) in labels.iter().enumerate() {
        for i in 0..p {
            means[l][i] += data[(row, i)];
        }
    }
    for (j, m) in means.iter_mut().enumerate() {
        for v in m.iter_mut() {
            *v /= counts[j] as f64;
        }
    }
    let mut centered = vec![vec![0.0f64; p]; n];
    for (row, &l) in labels.iter().enumerate() {
        for i in 0..p {
            centered[row][i] = data[(row, i)] - means[l][i];
        }
    }

    // Pooled variances and their shrinkage toward the median.
    let mut v = vec![0.0f64; p];
    for i in 0..p {
        for row in centered.iter() {
            v[i] += row[i] * row[i];
        }
        v[i] /= df;
    }
    let mut sorted = v.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let variance_median = if p % 2 == 1 {
        sorted[p / 2]
    } else {
        0.5 * (sorted[p / 2 - 1] + sorted[p / 2])
    };
    let mut var_num = 0.0;
    for i in 0..p {
        let q: Vec<f64> = centered.iter().map(|row| row[i] * row[i]).collect();
        let qbar = q.iter().sum::<f64>() / nf;
        var_num += nf / (nf - 1.0).powi(3) * q.iter().map(|qi| (qi - qbar).powi(2)).sum::<f64>();
    }
    let var_den: f64 = v.iter().map(|vi| (vi - variance_median).powi(2)).sum();
    let lambda_var = if var_den <= 0.0 {
        1.0
    } else {
        (var_num / var_den).clamp(0.0, 1.0)
    };
    let variances: Vec<f64> = v
        .iter()
        .map(|vi| lambda_var * variance_median + (1.0 - lambda_var) * vi)
        .collect();

    // Standardized residuals and the correlation shrinkage intensity.
    let mut xs = vec![vec![0.0f64; p]; n];
    for row in 0..n {
        for i in 0..p {
            xs[row][i] = centered[row][i] / v[i].sqrt();
        }
    }
    let mut r = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        for j in 0..p {
            let mut s = 0.0;
            for row in xs.iter() {
                s += row[i] * row[j];
            }
            r[(i, j)] = s / df;
        }
    }
    let mut corr_num = 0.0;
    let mut corr_den = 0.0;
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let w: Vec<f64> = xs.iter().map(|row| row[i] * row[j]).collect();
            let wbar = w.iter().sum::<f64>() / nf;
            corr_num +=
                nf / (nf - 1.0).powi(3) * w.iter().map(|wk| (wk - wbar).powi(2)).sum::<f64>();
            corr_den += r[(i, j)] * r[(i, j)];
        }
    }
    let lambda_corr = if corr_den <= 0.0 || p == 1 {
        1.0
    } else {
        (corr_num / corr_den).clamp(0.0, 1.0)
    };
    let mut corr = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        for j in 0..p {
            corr[(i, j)] = if i == j {
                1.0
            } else {
                (1.0 - lambda_corr) * r[(i, j)]
            };
        }
    }

    // Class frequency shrinkage toward the uniform distribution.
    let kf = k as f64;
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
    let freq_num = 1.0 - freqs.iter().map(|f| f * f).sum::<f64>();
    let freq_den = (nf - 1.0) * freqs.iter().map(|f| (1.0 / kf - f).powi(2)).sum::<f64>();
    let lambda_freq = if freq_den <= 0.0 {
        1.0
    } else {
        (freq_num / freq_den).clamp(0.0, 1.0)
    };
    let frequencies: Vec<f64> = freqs
        .iter()
        .map(|f| lambda_freq / kf + (1.0 - lambda_freq) * f)
        .collect();

    OracleShrinkage {
        lambda_corr,
        lambda_var,
        lambda_freq,
        corr,
        variances,
        variance_median,
        frequencies,
    }
}

/// Kolmogorov-Smirnov statistic against the uniform distribution on [0, 1].
pub fn ks_uniform(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let hi = (i + 1) as f64 / n - x;
        let lo = x - i as f64 / n;
        d = d.max(hi.max(lo));
    }
    d
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / (1.0 + x.abs().max(y.abs())))
        .fold(0.0, f64::max)
}
