//! Weighted summary statistics and histogram comparisons.

use crate::error::{Error, Result};
use crate::hist::Histogram1D;

/// Weighted mean `Σ w x / Σ w`.
///
/// Errors on empty or mismatched inputs and when the total weight is not
/// positive (a negative or zero total makes the estimate meaningless).
pub fn weighted_mean(xs: &[f64], ws: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("weighted_mean of empty sample".into()));
    }
    if xs.len() != ws.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values vs {} weights",
            xs.len(),
            ws.len()
        )));
    }
    let sum_w: f64 = ws.iter().sum();
    if !(sum_w > 0.0) || !sum_w.is_finite() {
        return Err(Error::Algorithm(format!(
            "weighted_mean needs positive finite total weight, got {sum_w}"
        )));
    }
    let num: f64 = xs.iter().zip(ws).map(|(x, w)| x * w).sum();
    Ok(num / sum_w)
}

/// Unweighted sample mean and standard deviation (n-1 denominator).
pub fn sample_mean_std(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.len() < 2 {
        return Err(Error::EmptyInput(
            "sample std needs at least two values".into(),
        ));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

/// Fill a weighted 1-D histogram over the given edges.
pub fn weighted_hist(xs: &[f64], ws: &[f64], edges: &[f64]) -> Result<Histogram1D> {
    if xs.len() != ws.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values vs {} weights",
            xs.len(),
            ws.len()
        )));
    }
    let mut h = Histogram1D::new(edges.to_vec())?;
    for (&x, &w) in xs.iter().zip(ws) {
        h.fill(x, w);
    }
    Ok(h)
}

/// Mean chi-square per bin between two weighted histograms.
///
/// The per-bin variance is Poisson-motivated: for a weighted count the
/// variance estimate is the sum of squared weights, and the two histograms
/// are treated as independent, so `var = sumw2_a + sumw2_b`. Bins where both
/// variances are zero are skipped; if no bin has variance the comparison is
/// an error.
pub fn chi2_per_bin(a: &Histogram1D, b: &Histogram1D) -> Result<f64> {
    if a.edges != b.edges {
        return Err(Error::DimensionMismatch(
            "chi2_per_bin needs identical binnings".into(),
        ));
    }
    let mut chi2 = 0.0;
    let mut used = 0usize;
    for i in 0..a.n_bins() {
        let var = a.sumw2[i] + b.sumw2[i];
        if var > 0.0 {
            chi2 += (a.contents[i] - b.contents[i]).powi(2) / var;
            used += 1;
        } else if a.contents[i] != b.contents[i] {
            return Err(Error::Algorithm(format!(
                "bin {i} differs ({} vs {}) but has zero variance",
                a.contents[i], b.contents[i]
            )));
        }
    }
    if used == 0 {
        return Err(Error::EmptyInput("chi2_per_bin: all bins empty".into()));
    }
    Ok(chi2 / used as f64)
}

/// Kish effective sample size `(Σ w)^2 / Σ w^2`; 0 for an empty set.
pub fn effective_sample_size(ws: &[f64]) -> f64 {
    let sw: f64 = ws.iter().sum();
    let sw2: f64 = ws.iter().map(|w| w * w).sum();
    if sw2 > 0.0 {
        sw * sw / sw2
    } else {
        0.0
    }
}

/// Relative L1 distance `Σ|a - b| / Σ|b|` between two content vectors.
pub fn relative_l1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "relative_l1 over {} vs {} bins",
            a.len(),
            b.len()
        )));
    }
    let denom: f64 = b.iter().map(|x| x.abs()).sum();
    if !(denom > 0.0) {
        return Err(Error::EmptyInput("relative_l1 reference is all zero".into()));
    }
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    Ok(num / denom)
}

/// Empirical quantile with linear interpolation between order statistics.
/// `q` must be in `[0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("quantile of empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Config(format!("quantile {q} outside [0, 1]")));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in quantile"));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] * (1.0 - frac) + sorted[hi] * frac)
}
