//! Local and tail-area false discovery rates from a two-component mixture.
//!
//! The marginal density of the normalized scores is modeled as
//! `f(z) = pi0 f0(z) + (1 - pi0) fA(z)` with a normal empirical null `f0`.
//! The null location and scale come from a truncated maximum likelihood
//! fit on the central part of the data, where nulls dominate. Scores are
//! then mapped to upper-tail p-values under the fitted null, the mixture
//! density of those p-values is estimated by the Grenander (least concave
//! majorant) estimator, and
//!
//! ```text
//! local fdr(p) = min(1, pi0 / g(p))        g = Grenander density
//! tail   Fdr(p) = min(1, pi0 p / G(p))     G = its CDF
//! ```
//!
//! Because `g` is non-increasing by construction, the local fdr is
//! automatically monotone: non-decreasing in the p-value, hence
//! non-increasing in the score. The local fndr is `1 - fdr`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Location and scale of the fitted empirical null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullParams {
    pub location: f64,
    pub scale: f64,
}

/// Per-feature fdr quantities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FdrEstimate {
    /// The normalized scores the estimate was computed from.
    pub transformed: Vec<f64>,
    /// Upper-tail p-values under the fitted null.
    pub pvalues: Vec<f64>,
    /// Local fdr, in [0, 1], non-increasing in the score.
    pub local_fdr: Vec<f64>,
    /// Tail-area Fdr (q-value-like), in [0, 1].
    pub tail_fdr: Vec<f64>,
    /// Estimated null proportion, in (0, 1].
    pub pi0: f64,
    pub null_params: NullParams,
}

impl FdrEstimate {
    /// Local false nondiscovery rate: `1 - local fdr`.
    pub fn local_fndr(&self) -> Vec<f64> {
        self.local_fdr.iter().map(|f| 1.0 - f).collect()
    }
}

/// Tuning knobs for the mixture fit.
#[derive(Debug, Clone, Copy)]
pub struct FdrOptions {
    /// Central quantile span used for the truncated null fit.
    pub central_fraction: f64,
    /// Minimum number of features required for a stable null fit.
    pub min_features: usize,
}

impl Default for FdrOptions {
    fn default() -> Self {
        Self {
            central_fraction: 0.75,
            min_features: 200,
        }
    }
}

/// Fits the two-component mixture on normalized scores with defaults.
pub fn estimate_fdr(z: &[f64]) -> Result<FdrEstimate> {
    estimate_fdr_with(z, &FdrOptions::default())
}

pub fn estimate_fdr_with(z: &[f64], opts: &FdrOptions) -> Result<FdrEstimate> {
    validate_scores(z, opts)?;
    let n = z.len();
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted[n - 1] - sorted[0] <= 0.0 {
        return Err(Error::Degenerate("all normalized scores are equal".into()));
    }
    let edge = (1.0 - opts.central_fraction) / 2.0;
    let lo = sorted[(edge * (n - 1) as f64).round() as usize];
    let hi = sorted[((1.0 - edge) * (n - 1) as f64).round() as usize];
    if hi <= lo {
        return Err(Error::Degenerate(
            "central window of normalized scores is degenerate".into(),
        ));
    }
    let window: Vec<f64> = z.iter().copied().filter(|&v| v >= lo && v <= hi).collect();
    let null = fit_truncated_normal(&window, lo, hi)?;

    // Null proportion: window mass over its probability under the null.
    let window_mass = window.len() as f64 / n as f64;
    let null_mass = std_normal_cdf((hi - null.location) / null.scale)
        - std_normal_cdf((lo - null.location) / null.scale);
    let pi0 = (window_mass / null_mass.max(1e-12)).clamp(1e-12, 1.0);

    // Upper-tail p-values under the fitted null: large score = small p.
    let pvalues: Vec<f64> = z
        .iter()
        .map(|&v| std_normal_cdf(-(v - null.location) / null.scale))
        .collect();
    Ok(mixture_estimate(z, pvalues, pi0, null))
}

/// Fits the mixture on signed scores whose null is symmetric around zero
/// (for example the decorrelated t-scores of a two-class problem, where
/// both signs carry signal). Only the null scale is estimated, by
/// truncated maximum likelihood on the central band of folded scores;
/// p-values are two-sided, so the local fdr is a function of the score
/// magnitude.
pub fn estimate_fdr_symmetric(z: &[f64]) -> Result<FdrEstimate> {
    estimate_fdr_symmetric_with(z, &FdrOptions::default())
}

pub fn estimate_fdr_symmetric_with(z: &[f64], opts: &FdrOptions) -> Result<FdrEstimate> {
    validate_scores(z, opts)?;
    let n = z.len();
    let mut folded: Vec<f64> = z.iter().map(|v| v.abs()).collect();
    folded.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let band = folded[(opts.central_fraction * (n - 1) as f64).round() as usize];
    if band <= 0.0 {
        return Err(Error::Degenerate(
            "central band of folded scores is degenerate".into(),
        ));
    }
    let window: Vec<f64> = z.iter().copied().filter(|v| v.abs() <= band).collect();
    let scale = fit_symmetric_truncated_normal(&window, band)?;
    let null = NullParams {
        location: 0.0,
        scale,
    };

    let window_mass = window.len() as f64 / n as f64;
    let null_mass = 2.0 * std_normal_cdf(band / scale) - 1.0;
    let pi0 = (window_mass / null_mass.max(1e-12)).clamp(1e-12, 1.0);

    // Two-sided p-values: both tails are alternatives.
    let pvalues: Vec<f64> = z
        .iter()
        .map(|&v| (2.0 * std_normal_cdf(-v.abs() / scale)).min(1.0))
        .collect();
    Ok(mixture_estimate(z, pvalues, pi0, null))
}

/// Shared back half: Grenander mixture density of the p-values, local and
/// tail-area fdr, and the isotonic safety pass.
fn mixture_estimate(z: &[f64], pvalues: Vec<f64>, pi0: f64, null: NullParams) -> FdrEstimate {
    let n = z.len();
    let (density, cdf) = grenander(&pvalues);
    let mut local_fdr: Vec<f64> = pvalues
        .iter()
        .zip(&density)
        .map(|(_, &g)| if g > 0.0 { (pi0 / g).min(1.0) } else { 1.0 })
        .collect();
    // The hull already makes fdr monotone in p; a cumulative-max pass in
    // p-value order absorbs floating-point wobble at segment joins.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pvalues[a].partial_cmp(&pvalues[b]).unwrap());
    let mut running = 0.0f64;
    for &i in &order {
        running = running.max(local_fdr[i]);
        local_fdr[i] = running;
    }
    let tail_fdr: Vec<f64> = pvalues
        .iter()
        .zip(&cdf)
        .map(|(&p, &g)| {
            if g > 0.0 {
                (pi0 * p / g).min(1.0)
            } else if p == 0.0 {
                0.0
            } else {
                1.0
            }
        })
        .collect();

    FdrEstimate {
        transformed: z.to_vec(),
        pvalues,
        local_fdr,
        tail_fdr,
        pi0,
        null_params: null,
    }
}

fn validate_scores(z: &[f64], opts: &FdrOptions) -> Result<()> {
    if z.len() < opts.min_features {
        return Err(Error::TooFewSamples {
            needed: opts.min_features,
            got: z.len(),
        });
    }
    if !opts.central_fraction.is_finite()
        || opts.central_fraction <= 0.0
        || opts.central_fraction >= 1.0
    {
        return Err(Error::InvalidArgument(format!(
            "central fraction must lie in (0, 1), got {}",
            opts.central_fraction
        )));
    }
    if let Some(&bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite normalized score {bad}"
        )));
    }
    Ok(())
}

pub(crate) fn std_normal_cdf(t: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-t / std::f64::consts::SQRT_2)
}

/// Truncated-normal maximum likelihood on observations inside `[lo, hi]`.
fn fit_truncated_normal(window: &[f64], lo: f64, hi: f64) -> Result<NullParams> {
    let m = window.len();
    if m < 10 {
        return Err(Error::Degenerate(format!(
            "only {m} scores in the central window; null fit needs at least 10"
        )));
    }
    let mf = m as f64;
    let mean = window.iter().sum::<f64>() / mf;
    let var = window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (mf - 1.0);
    let sd = var.sqrt().max(1e-8);

    let nll = |loc: f64, log_scale: f64| -> f64 {
        let s = log_scale.exp();
        let mass = (std_normal_cdf((hi - loc) / s) - std_normal_cdf((lo - loc) / s)).max(1e-300);
        let quad: f64 = window.iter().map(|v| (v - loc).powi(2)).sum::<f64>() / (2.0 * s * s);
        mf * log_scale + quad + mf * mass.ln()
    };
    let (loc, log_scale) = nelder_mead_2d(nll, (mean, sd.ln()), (0.5 * sd, 0.3));
    Ok(NullParams {
        location: loc,
        scale: log_scale.exp(),
    })
}

/// Scale MLE of a zero-mean normal observed inside `[-band, band]`.
fn fit_symmetric_truncated_normal(window: &[f64], band: f64) -> Result<f64> {
    let m = window.len();
    if m < 10 {
        return Err(Error::Degenerate(format!(
            "only {m} scores in the central band; null fit needs at least 10"
        )));
    }
    let mf = m as f64;
    let sumsq: f64 = window.iter().map(|v| v * v).sum();
    let sd = (sumsq / mf).sqrt().max(1e-8);
    let nll = |log_scale: f64| -> f64 {
        let s = log_scale.exp();
        let mass = (2.0 * std_normal_cdf(band / s) - 1.0).max(1e-300);
        mf * log_scale + sumsq / (2.0 * s * s) + mf * mass.ln()
    };
    Ok(golden_section_min(nll, sd.ln() - 2.0, sd.ln() + 2.0).exp())
}

/// Deterministic golden-section minimization of a unimodal 1-d function.
fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..120 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Plain Nelder-Mead on two parameters with a fixed iteration budget.
/// Deterministic; good enough for a smooth two-parameter likelihood.
fn nelder_mead_2d<F: Fn(f64, f64) -> f64>(f: F, start: (f64, f64), step: (f64, f64)) -> (f64, f64) {
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;
    let mut simplex = [
        (start.0, start.1),
        (start.0 + step.0, start.1),
        (start.0, start.1 + step.1),
    ];
    let mut values = simplex.map(|(a, b)| f(a, b));
    for _ in 0..400 {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let [best, mid, worst] = order;
        if (values[worst] - values[best]).abs() < 1e-12 && simplex_size(&simplex) < 1e-10 {
            break;
        }
        let centroid = (
            (simplex[best].0 + simplex[mid].0) / 2.0,
            (simplex[best].1 + simplex[mid].1) / 2.0,
        );
        let reflect = (
            centroid.0 + ALPHA * (centroid.0 - simplex[worst].0),
            centroid.1 + ALPHA * (centroid.1 - simplex[worst].1),
        );
        let fr = f(reflect.0, reflect.1);
        if fr < values[best] {
            let expand = (
                centroid.0 + GAMMA * (reflect.0 - centroid.0),
                centroid.1 + GAMMA * (reflect.1 - centroid.1),
            );
            let fe = f(expand.0, expand.1);
            if fe < fr {
                simplex[worst] = expand;
                values[worst] = fe;
            } else {
                simplex[worst] = reflect;
                values[worst] = fr;
            }
        } else if fr < values[mid] {
            simplex[worst] = reflect;
            values[worst] = fr;
        } else {
            let contract = (
                centroid.0 + RHO * (simplex[worst].0 - centroid.0),
                centroid.1 + RHO * (simplex[worst].1 - centroid.1),
            );
            let fc = f(contract.0, contract.1);
            if fc < values[worst] {
                simplex[worst] = contract;
                values[worst] = fc;
            } else {
                for i in [mid, worst] {
                    simplex[i] = (
                        simplex[best].0 + SIGMA * (simplex[i].0 - simplex[best].0),
                        simplex[best].1 + SIGMA * (simplex[i].1 - simplex[best].1),
                    );
                    values[i] = f(simplex[i].0, simplex[i].1);
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..3 {
        if values[i] < values[best] {
            best = i;
        }
    }
    simplex[best]
}

fn simplex_size(s: &[(f64, f64); 3]) -> f64 {
    let d01 = (s[0].0 - s[1].0).abs() + (s[0].1 - s[1].1).abs();
    let d02 = (s[0].0 - s[2].0).abs() + (s[0].1 - s[2].1).abs();
    d01.max(d02)
}

/// Grenander estimator of a non-increasing density on [0, 1].
///
/// Returns, for every input point, the left-derivative (density) and the
/// value (CDF) of the least concave majorant of the empirical CDF.
fn grenander(pvalues: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = pvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pvalues[a].partial_cmp(&pvalues[b]).unwrap());

    // ECDF support points, deduplicated on x keeping the highest y,
    // anchored at (0, 0) and (1, 1).
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(n + 2);
    points.push((0.0, 0.0));
    for (rank, &i) in order.iter().enumerate() {
        let x = pvalues[i];
        let y = (rank + 1) as f64 / n as f64;
        match points.last_mut() {
            Some(last) if last.0 == x => last.1 = y,
            _ => points.push((x, y)),
        }
    }
    if points.last().map(|&(x, _)| x < 1.0).unwrap_or(true) {
        points.push((1.0, 1.0));
    }

    // Least concave majorant: upper hull with non-increasing slopes.
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &pt in &points {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b.0 - a.0) * (pt.1 - a.1) - (b.1 - a.1) * (pt.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(pt);
    }

    let mut density = vec![0.0; n];
    let mut cdf = vec![0.0; n];
    let mut seg = 0usize;
    for &i in &order {
        let x = pvalues[i];
        while seg + 1 < hull.len() - 1 && hull[seg + 1].0 < x {
            seg += 1;
        }
        let (x0, y0) = hull[seg];
        let (x1, y1) = hull[seg + 1];
        let slope = if x1 > x0 {
            (y1 - y0) / (x1 - x0)
        } else {
            f64::INFINITY
        };
        density[i] = slope;
        cdf[i] = if x1 > x0 { y0 + slope * (x - x0) } else { y1 };
    }
    (density, cdf)
}
