use serde::{Deserialize, Serialize};

use super::regression::ols_xy;
use super::ModelError;
use crate::numeric::exact_sum;

pub const DEFAULT_DISPLACEMENT_XMIN_KM: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub xmin: f64,
    /// Upper truncation point, for the truncated estimator only.
    pub xmax: Option<f64>,
    pub n_tail: usize,
    pub stderr: f64,
}

fn check_xmin(xmin: f64) -> Result<(), ModelError> {
    if !(xmin.is_finite() && xmin > 0.0) {
        return Err(ModelError::InvalidBounds(format!("xmin {xmin} must be positive and finite")));
    }
    Ok(())
}

/// Continuous maximum-likelihood exponent of `p(x) ~ x^-beta` for `x >= xmin`.
pub fn fit_power_law(samples: &[f64], xmin: f64) -> Result<PowerLawFit, ModelError> {
    check_xmin(xmin)?;
    let logs: Vec<f64> = samples.iter().filter(|&&x| x >= xmin && x.is_finite()).map(|&x| (x / xmin).ln()).collect();
    let n = logs.len();
    if n < 2 {
        return Err(ModelError::TooFewSamples { need: 2, got: n });
    }
    let s = exact_sum(logs);
    if s <= 0.0 {
        return Err(ModelError::DegenerateTail);
    }
    let exponent = 1.0 + n as f64 / s;
    Ok(PowerLawFit { exponent, xmin, xmax: None, n_tail: n, stderr: (exponent - 1.0) / (n as f64).sqrt() })
}

// Mean and variance of ln(x/xmin) under the power law truncated to
// [xmin, xmax], with a = beta - 1 and r = ln(xmax/xmin). ln(x/xmin) is then
// an exponential with rate a truncated to [0, r].
fn truncated_log_moments(a: f64, r: f64) -> (f64, f64) {
    let e = (a * r).exp_m1();
    let mean = 1.0 / a - r / e;
    let var = 1.0 / (a * a) - r * r * (e + 1.0) / (e * e);
    (mean, var)
}

/// Maximum-likelihood exponent of the power law truncated to `[xmin, xmax]`.
///
/// Samples outside the interval are ignored. Solves the score equation by
/// bisection; the mean of `ln(x/xmin)` is monotone in the exponent.
pub fn fit_power_law_truncated(samples: &[f64], xmin: f64, xmax: f64) -> Result<PowerLawFit, ModelError> {
    check_xmin(xmin)?;
    if !(xmax.is_finite() && xmax > xmin) {
        return Err(ModelError::InvalidBounds(format!("xmax {xmax} must exceed xmin {xmin}")));
    }
    let logs: Vec<f64> =
        samples.iter().filter(|&&x| x >= xmin && x <= xmax).map(|&x| (x / xmin).ln()).collect();
    let n = logs.len();
    if n < 2 {
        return Err(ModelError::TooFewSamples { need: 2, got: n });
    }
    let m = exact_sum(logs.iter().copied()) / n as f64;
    if m <= 0.0 {
        return Err(ModelError::DegenerateTail);
    }
    let r = (xmax / xmin).ln();
    if m >= r / 2.0 {
        return Err(ModelError::NoSolution);
    }
    let (mut lo, mut hi) = (1e-9, 2.0 / m + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if truncated_log_moments(mid, r).0 > m {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let a = 0.5 * (lo + hi);
    let var = truncated_log_moments(a, r).1;
    Ok(PowerLawFit { exponent: 1.0 + a, xmin, xmax: Some(xmax), n_tail: n, stderr: 1.0 / (n as f64 * var).sqrt() })
}

/// Least-squares fit to a log-binned density histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogBinnedFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `(bin lower edge, density)` for each non-empty bin.
    pub bins: Vec<(f64, f64)>,
}

/// Cross-check estimator: bins `[xmin 2^k, xmin 2^(k+1))`, density per unit
/// length, OLS of log density on log geometric bin center.
pub fn log_binned_fit(samples: &[f64], xmin: f64) -> Result<LogBinnedFit, ModelError> {
    check_xmin(xmin)?;
    let tail: Vec<f64> = samples.iter().copied().filter(|&x| x >= xmin && x.is_finite()).collect();
    let mut counts: Vec<u64> = Vec::new();
    for x in &tail {
        let k = (x / xmin).log2().floor() as usize;
        if counts.len() <= k {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
    }
    let n = tail.len() as f64;
    let mut bins = Vec::new();
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    for (k, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let lower = xmin * 2f64.powi(k as i32);
        let density = c as f64 / (n * lower);
        bins.push((lower, density));
        lx.push((lower * std::f64::consts::SQRT_2).ln());
        ly.push(density.ln());
    }
    if bins.len() < 3 {
        return Err(ModelError::TooFewSamples { need: 3, got: bins.len() });
    }
    let fit = ols_xy(&lx, &ly)?;
    Ok(LogBinnedFit { exponent: -fit.coefficients[1], intercept: fit.coefficients[0], r2: fit.r2, bins })
}
