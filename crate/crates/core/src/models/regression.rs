use std::collections::BTreeMap;
use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::country::CountryCode;
use crate::numeric::{exact_sum, r_squared};

/// Ordinary least-squares result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    /// Classical standard errors; `None` without residual degrees of freedom.
    pub stderrs: Option<Vec<f64>>,
    pub r2: f64,
    pub n: usize,
    pub ss_res: f64,
    pub ss_tot: f64,
}

/// Least squares via Householder QR. Columns of `design` are regressors; add
/// a column of ones for an intercept.
pub fn ols(design: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit, ModelError> {
    let (n, p) = design.shape();
    if y.len() != n {
        return Err(ModelError::LengthMismatch(n, y.len()));
    }
    if n < p || p == 0 {
        return Err(ModelError::DegenerateDesign);
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|j| design.column(j).norm()).fold(0.0, f64::max);
    if (0..p).any(|j| r[(j, j)].abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE)) {
        return Err(ModelError::DegenerateDesign);
    }
    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let beta = r.solve_upper_triangular(&qty).ok_or(ModelError::DegenerateDesign)?;
    let resid = &yv - design * &beta;
    let ss_res = exact_sum(resid.iter().map(|e| e * e));
    let mean = exact_sum(y.iter().copied()) / n as f64;
    let ss_tot = exact_sum(y.iter().map(|v| (v - mean) * (v - mean)));
    let stderrs = (n > p).then(|| {
        let sigma2 = ss_res / (n - p) as f64;
        let rinv = r.solve_upper_triangular(&DMatrix::identity(p, p)).expect("nonsingular R");
        (0..p).map(|j| (sigma2 * rinv.row(j).norm_squared()).sqrt()).collect()
    });
    Ok(OlsFit { coefficients: beta.iter().copied().collect(), stderrs, r2: r_squared(ss_res, ss_tot), n, ss_res, ss_tot })
}

/// Simple regression `y = c0 + c1 x`.
pub(crate) fn ols_xy(x: &[f64], y: &[f64]) -> Result<OlsFit, ModelError> {
    if x.len() != y.len() {
        return Err(ModelError::LengthMismatch(x.len(), y.len()));
    }
    let design = DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    ols(&design, y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

/// OLS of `ln y` on `ln x`.
pub fn loglog_regression(x: &[f64], y: &[f64]) -> Result<LogLogFit, ModelError> {
    if x.len() != y.len() {
        return Err(ModelError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(ModelError::TooFewSamples { need: 3, got: x.len() });
    }
    if let Some(v) = x.iter().chain(y).find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(ModelError::NonPositive(format!("{v}")));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let f = ols_xy(&lx, &ly)?;
    Ok(LogLogFit { exponent: f.coefficients[1], intercept: f.coefficients[0], r2: f.r2, n: f.n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalValidation {
    pub r2: f64,
    pub slope: f64,
    pub intercept: f64,
    pub matched: usize,
    /// Countries with an estimate but no reference value.
    pub missing_reference: Vec<CountryCode>,
    /// Countries with a reference value but no estimate.
    pub missing_estimate: Vec<CountryCode>,
}

/// Linear fit of reference values on estimates over the countries present
/// in both. A constant reference carries no correlation and scores 0.
pub fn validate_external(
    estimates: &BTreeMap<CountryCode, f64>,
    reference: &BTreeMap<CountryCode, f64>,
) -> Result<ExternalValidation, ModelError> {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (c, e) in estimates {
        if let Some(r) = reference.get(c) {
            x.push(*e);
            y.push(*r);
        }
    }
    if x.len() < 3 {
        return Err(ModelError::TooFewMatches(x.len()));
    }
    let missing_reference = estimates.keys().filter(|c| !reference.contains_key(c)).cloned().collect();
    let missing_estimate = reference.keys().filter(|c| !estimates.contains_key(c)).cloned().collect();
    let f = ols_xy(&x, &y)?;
    let r2 = if f.ss_tot == 0.0 { 0.0 } else { f.r2 };
    Ok(ExternalValidation {
        r2,
        slope: f.coefficients[1],
        intercept: f.coefficients[0],
        matched: x.len(),
        missing_reference,
        missing_estimate,
    })
}

/// One row of the external reference statistics table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub arrivals_thousands: f64,
    pub receipts_musd: f64,
}

/// Reads `code,arrivals_thousands,receipts_musd` (header optional).
pub fn read_reference<R: Read>(reader: R) -> Result<BTreeMap<CountryCode, ReferenceEntry>, ModelError> {
    let mut out = BTreeMap::new();
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ModelError::Table(e.to_string()))?;
        if i == 0 && rec.get(1).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let bad = |what: &str| ModelError::Table(format!("row {}: bad {what}", i + 1));
        let code: CountryCode = rec.get(0).ok_or_else(|| bad("code"))?.parse().map_err(|_| bad("code"))?;
        let arrivals = rec.get(1).and_then(|f| f.parse().ok()).ok_or_else(|| bad("arrivals_thousands"))?;
        let receipts = rec.get(2).and_then(|f| f.parse().ok()).ok_or_else(|| bad("receipts_musd"))?;
        out.insert(code, ReferenceEntry { arrivals_thousands: arrivals, receipts_musd: receipts });
    }
    Ok(out)
}
