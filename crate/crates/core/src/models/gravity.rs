use std::collections::BTreeMap;
use std::io::Read;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::regression::ols;
use super::ModelError;
use crate::country::CountryCode;
use crate::geo::{haversine_km, LatLon};
use crate::network::{FlowNetwork, FlowWeight};

pub const DEFAULT_MIN_DISTANCE_KM: f64 = 100.0;

/// Fit of `F_ij = A p_i^alpha p_j^beta / r_ij^gamma` in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GravityFit {
    pub log_a: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub r2: f64,
    pub n_pairs: usize,
    pub stderr: Option<GravityStderr>,
    /// Pairs skipped because the flow was zero.
    pub excluded_zero: usize,
    /// Pairs skipped for being closer than the minimum distance.
    pub excluded_near: usize,
    /// Pairs skipped for a missing population or distance.
    pub excluded_missing: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravityStderr {
    pub log_a: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// One ordered country pair entering the fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GravityPair {
    pub flow: f64,
    pub origin_population: f64,
    pub destination_population: f64,
    pub distance_km: f64,
}

/// Pairwise capital distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub codes: Vec<CountryCode>,
    pub km: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn get(&self, a: &CountryCode, b: &CountryCode) -> Option<f64> {
        let i = self.codes.binary_search(a).ok()?;
        let j = self.codes.binary_search(b).ok()?;
        Some(self.km[i][j])
    }
}

/// Haversine distances between every pair of capitals.
pub fn capital_distances(capitals: &BTreeMap<CountryCode, LatLon>) -> DistanceMatrix {
    let codes: Vec<CountryCode> = capitals.keys().cloned().collect();
    let pos: Vec<LatLon> = capitals.values().copied().collect();
    let n = codes.len();
    let mut km = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = haversine_km(pos[i], pos[j]);
            km[i][j] = d;
            km[j][i] = d;
        }
    }
    DistanceMatrix { codes, km }
}

/// Reads `code,lat,lon` (header optional).
pub fn read_capitals<R: Read>(reader: R) -> Result<BTreeMap<CountryCode, LatLon>, ModelError> {
    let mut out = BTreeMap::new();
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ModelError::Table(e.to_string()))?;
        if i == 0 && rec.get(1).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let bad = |what: &str| ModelError::Table(format!("row {}: bad {what}", i + 1));
        let code: CountryCode = rec.get(0).ok_or_else(|| bad("code"))?.parse().map_err(|_| bad("code"))?;
        let lat: f64 = rec.get(1).and_then(|f| f.parse().ok()).ok_or_else(|| bad("lat"))?;
        let lon: f64 = rec.get(2).and_then(|f| f.parse().ok()).ok_or_else(|| bad("lon"))?;
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(bad("coordinates"));
        }
        if out.insert(code.clone(), LatLon::new(lat, lon)).is_some() {
            return Err(ModelError::Table(format!("duplicate capital for {code}")));
        }
    }
    Ok(out)
}

/// OLS on `ln F = ln A + alpha ln p_i + beta ln p_j - gamma ln r`.
/// Pairs must already be filtered; every value must be positive.
pub fn fit_gravity_pairs(pairs: &[GravityPair]) -> Result<GravityFit, ModelError> {
    if pairs.len() < 5 {
        return Err(ModelError::TooFewPairs(pairs.len()));
    }
    for p in pairs {
        for v in [p.flow, p.origin_population, p.destination_population, p.distance_km] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::NonPositive(format!("{v} in gravity pair")));
            }
        }
    }
    let design = DMatrix::from_fn(pairs.len(), 4, |i, j| match j {
        0 => 1.0,
        1 => pairs[i].origin_population.ln(),
        2 => pairs[i].destination_population.ln(),
        _ => pairs[i].distance_km.ln(),
    });
    let y: Vec<f64> = pairs.iter().map(|p| p.flow.ln()).collect();
    let f = ols(&design, &y)?;
    let c = &f.coefficients;
    Ok(GravityFit {
        log_a: c[0],
        alpha: c[1],
        beta: c[2],
        gamma: -c[3],
        r2: f.r2,
        n_pairs: pairs.len(),
        stderr: f.stderrs.map(|s| GravityStderr { log_a: s[0], alpha: s[1], beta: s[2], gamma: s[3] }),
        excluded_zero: 0,
        excluded_near: 0,
        excluded_missing: 0,
    })
}

/// Gravity fit over every ordered pair of network nodes.
///
/// Pairs closer than `min_distance_km`, with zero flow, or lacking a
/// population or distance are excluded and counted.
pub fn fit_gravity(
    network: &FlowNetwork,
    weight: FlowWeight,
    populations: &BTreeMap<CountryCode, f64>,
    distances: &DistanceMatrix,
    min_distance_km: f64,
) -> Result<GravityFit, ModelError> {
    let flows: BTreeMap<(&CountryCode, &CountryCode), f64> =
        network.edges.iter().map(|e| ((&e.origin, &e.destination), e.weight(weight))).collect();
    let (mut zero, mut near, mut missing) = (0, 0, 0);
    let mut pairs = Vec::new();
    for a in &network.nodes {
        for b in &network.nodes {
            if a == b {
                continue;
            }
            let (Some(&pa), Some(&pb), Some(d)) = (populations.get(a), populations.get(b), distances.get(a, b))
            else {
                missing += 1;
                continue;
            };
            if d < min_distance_km {
                near += 1;
                continue;
            }
            let f = flows.get(&(a, b)).copied().unwrap_or(0.0);
            if f <= 0.0 {
                zero += 1;
                continue;
            }
            pairs.push(GravityPair { flow: f, origin_population: pa, destination_population: pb, distance_km: d });
        }
    }
    let mut fit = fit_gravity_pairs(&pairs)?;
    fit.excluded_zero = zero;
    fit.excluded_near = near;
    fit.excluded_missing = missing;
    Ok(fit)
}
