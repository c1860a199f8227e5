//! Country of residence and per-country representativeness.
//!
//! A user's residence is the country where they posted the most events.
//! Ties go to the country seen first, then to the smaller code. The share of
//! a country's census population that resides there according to the data is
//! its *penetration*; countries below the penetration or resident-count
//! thresholds are flagged as excluded.

use std::collections::BTreeMap;
use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::country::CountryCode;
use crate::ingest::Trajectory;

pub const DEFAULT_MIN_PENETRATION: f64 = 0.0005;
pub const DEFAULT_MIN_RESIDENTS: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    /// Events per country.
    pub counts: BTreeMap<CountryCode, u64>,
    /// Earliest timestamp per country.
    pub first_seen: BTreeMap<CountryCode, i64>,
    pub residence: CountryCode,
}

impl UserProfile {
    /// Builds a profile from per-country counts and first-seen times.
    /// Returns `None` when `counts` is empty.
    pub fn from_counts(
        user_id: impl Into<String>,
        counts: BTreeMap<CountryCode, u64>,
        first_seen: BTreeMap<CountryCode, i64>,
    ) -> Option<Self> {
        let residence = assign_residence(&counts, &first_seen)?;
        Some(Self { user_id: user_id.into(), counts, first_seen, residence })
    }

    pub fn total_events(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn distinct_countries(&self) -> usize {
        self.counts.len()
    }

    /// Countries other than the residence, in code order.
    pub fn visited_abroad(&self) -> impl Iterator<Item = &CountryCode> {
        self.counts.keys().filter(move |c| **c != self.residence)
    }
}

/// Argmax of `counts`; ties by earliest `first_seen`, then by code.
pub fn assign_residence(
    counts: &BTreeMap<CountryCode, u64>,
    first_seen: &BTreeMap<CountryCode, i64>,
) -> Option<CountryCode> {
    counts
        .iter()
        .max_by(|(ca, na), (cb, nb)| {
            let fa = first_seen.get(*ca).copied().unwrap_or(i64::MAX);
            let fb = first_seen.get(*cb).copied().unwrap_or(i64::MAX);
            // max_by keeps the last maximum, so invert the secondary keys
            na.cmp(nb).then_with(|| fb.cmp(&fa)).then_with(|| cb.cmp(ca))
        })
        .map(|(c, _)| c.clone())
}

/// One profile per user that has at least one country-labelled event.
pub fn build_profiles(trajectories: &BTreeMap<String, Trajectory>) -> Vec<UserProfile> {
    trajectories
        .par_iter()
        .filter_map(|(user, t)| {
            let mut counts: BTreeMap<CountryCode, u64> = BTreeMap::new();
            let mut first_seen: BTreeMap<CountryCode, i64> = BTreeMap::new();
            for e in t.events() {
                if let Some(c) = &e.country {
                    *counts.entry(c.clone()).or_default() += 1;
                    let f = first_seen.entry(c.clone()).or_insert(e.timestamp);
                    *f = (*f).min(e.timestamp);
                }
            }
            UserProfile::from_counts(user.clone(), counts, first_seen)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensusEntry {
    pub population: i64,
    pub gdp_per_capita: Option<f64>,
}

/// External population table, `code,population[,gdp_per_capita]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Census(pub BTreeMap<CountryCode, CensusEntry>);

#[derive(Debug, thiserror::Error)]
pub enum CensusError {
    #[error("census: {0}")]
    Csv(#[from] csv::Error),
    #[error("census line {line}: {reason}")]
    Line { line: u64, reason: String },
}

impl Census {
    pub fn read<R: Read>(reader: R) -> Result<Self, CensusError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
        let mut out = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |reason: String| CensusError::Line { line, reason };
            if rec.len() < 2 || rec.len() > 3 {
                return Err(bad(format!("expected 2 or 3 fields, found {}", rec.len())));
            }
            if i == 0 && rec[1].parse::<f64>().is_err() {
                continue; // header
            }
            let code: CountryCode = rec[0].parse().map_err(|e: crate::country::InvalidCountryCode| bad(e.to_string()))?;
            let population = rec[1]
                .parse::<i64>()
                .or_else(|_| rec[1].parse::<f64>().map(|p| p.round() as i64))
                .map_err(|_| bad(format!("bad population {:?}", &rec[1])))?;
            let gdp_per_capita = match rec.get(2) {
                Some(g) if !g.is_empty() => Some(g.parse::<f64>().map_err(|_| bad(format!("bad gdp {g:?}")))?),
                _ => None,
            };
            out.insert(code, CensusEntry { population, gdp_per_capita });
        }
        Ok(Self(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidenceThresholds {
    pub min_penetration: f64,
    pub min_residents: u64,
}

impl Default for ResidenceThresholds {
    fn default() -> Self {
        Self { min_penetration: DEFAULT_MIN_PENETRATION, min_residents: DEFAULT_MIN_RESIDENTS }
    }
}

/// Why a country was left out of the analysis. The first failing check wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    NoCensus,
    NonPositivePopulation,
    LowPenetration,
    FewResidents,
}

impl Exclusion {
    pub fn as_str(self) -> &'static str {
        match self {
            Exclusion::NoCensus => "no census",
            Exclusion::NonPositivePopulation => "population <= 0",
            Exclusion::LowPenetration => "penetration below threshold",
            Exclusion::FewResidents => "too few residents",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryStats {
    pub code: CountryCode,
    pub residents: u64,
    pub population: Option<i64>,
    pub gdp_per_capita: Option<f64>,
    /// residents / population; zero when the population is unknown.
    pub penetration: f64,
    pub exclusion: Option<Exclusion>,
}

impl CountryStats {
    pub fn included(&self) -> bool {
        self.exclusion.is_none()
    }
}

/// Residents per country, keyed reduction over profiles.
pub fn resident_counts(profiles: &[UserProfile]) -> BTreeMap<CountryCode, u64> {
    let mut out = BTreeMap::new();
    for p in profiles {
        *out.entry(p.residence.clone()).or_insert(0) += 1;
    }
    out
}

/// Penetration and inclusion for every country seen in the profiles or the census.
pub fn compute_country_stats(
    profiles: &[UserProfile],
    census: &Census,
    thresholds: &ResidenceThresholds,
) -> BTreeMap<CountryCode, CountryStats> {
    let residents = resident_counts(profiles);
    let mut codes: std::collections::BTreeSet<CountryCode> = census.0.keys().cloned().collect();
    codes.extend(residents.keys().cloned());
    for p in profiles {
        codes.extend(p.counts.keys().cloned());
    }
    codes
        .into_iter()
        .map(|code| {
            let n = residents.get(&code).copied().unwrap_or(0);
            let entry = census.0.get(&code);
            let (penetration, exclusion) = match entry {
                None => (0.0, Some(Exclusion::NoCensus)),
                Some(e) if e.population <= 0 => (0.0, Some(Exclusion::NonPositivePopulation)),
                Some(e) => {
                    let pen = n as f64 / e.population as f64;
                    let excl = if pen < thresholds.min_penetration {
                        Some(Exclusion::LowPenetration)
                    } else if n < thresholds.min_residents {
                        Some(Exclusion::FewResidents)
                    } else {
                        None
                    };
                    (pen, excl)
                }
            };
            let stats = CountryStats {
                code: code.clone(),
                residents: n,
                population: entry.map(|e| e.population),
                gdp_per_capita: entry.and_then(|e| e.gdp_per_capita),
                penetration,
                exclusion,
            };
            (code, stats)
        })
        .collect()
}
