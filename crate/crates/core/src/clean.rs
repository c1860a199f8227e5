//! Removal of impossible relocations and of automated event sources.
//!
//! Two passes, in this order:
//!
//! 1. [`speed_filter`] walks each trajectory and drops any event that would
//!    require travelling faster than the limit from the last event kept.
//! 2. [`source_popularity_filter`] ranks the client applications of every
//!    country by how many users post through them and keeps the head of the
//!    ranking that covers the requested share of the total; events posted
//!    through the tail are discarded.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::country::CountryCode;
use crate::geo::haversine_km;
use crate::ingest::{GeoEvent, Trajectory};

pub const DEFAULT_MAX_SPEED_KMH: f64 = 1000.0;
pub const DEFAULT_COVERAGE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CleanError {
    #[error("coverage must lie in (0, 1], got {0}")]
    Coverage(f64),
    #[error("maximum speed must be positive, got {0}")]
    MaxSpeed(f64),
}

/// Implied speed between two events in km/h.
///
/// A zero time gap gives `+inf` unless the positions coincide, in which case
/// the speed is zero.
pub fn speed_kmh(a: &GeoEvent, b: &GeoEvent) -> f64 {
    let d = haversine_km(a.position, b.position);
    let dt_h = (b.timestamp - a.timestamp).abs() as f64 / 3600.0;
    if dt_h == 0.0 {
        if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        d / dt_h
    }
}

/// Drops events implying a speed strictly above `max_speed_kmh` relative to
/// the last retained event. Returns the filtered trajectory and the number
/// of events removed. The first event is always kept.
pub fn speed_filter(trajectory: &Trajectory, max_speed_kmh: f64) -> (Trajectory, usize) {
    let mut kept: Vec<GeoEvent> = Vec::with_capacity(trajectory.len());
    for e in trajectory.events() {
        match kept.last() {
            Some(last) if speed_kmh(last, e) > max_speed_kmh => {}
            _ => kept.push(e.clone()),
        }
    }
    let removed = trajectory.len() - kept.len();
    let t = Trajectory::new(trajectory.user_id(), kept).expect("same user");
    (t, removed)
}

/// [`speed_filter`] over every trajectory, in parallel.
pub fn speed_filter_all(
    trajectories: &BTreeMap<String, Trajectory>,
    max_speed_kmh: f64,
) -> Result<(BTreeMap<String, Trajectory>, usize), CleanError> {
    if !(max_speed_kmh > 0.0) {
        return Err(CleanError::MaxSpeed(max_speed_kmh));
    }
    let out: Vec<(String, Trajectory, usize)> = trajectories
        .par_iter()
        .map(|(u, t)| {
            let (f, r) = speed_filter(t, max_speed_kmh);
            (u.clone(), f, r)
        })
        .collect();
    let removed = out.iter().map(|x| x.2).sum();
    Ok((out.into_iter().map(|(u, t, _)| (u, t)).collect(), removed))
}

/// What a source's popularity is measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopularityWeight {
    /// Distinct users posting through the source.
    #[default]
    Users,
    /// Events posted through the source.
    Events,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceRank {
    pub source: String,
    pub users: u64,
    pub events: u64,
    pub retained: bool,
}

impl SourceRank {
    fn mass(&self, weight: PopularityWeight) -> u64 {
        match weight {
            PopularityWeight::Users => self.users,
            PopularityWeight::Events => self.events,
        }
    }
}

/// Frozen per-country set of accepted sources.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RetainedSources(pub BTreeMap<CountryCode, BTreeSet<String>>);

impl RetainedSources {
    pub fn contains(&self, country: &CountryCode, source: &str) -> bool {
        self.0.get(country).is_some_and(|s| s.contains(source))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SourceFilterStats {
    pub users_before: usize,
    pub users_after: usize,
    pub events_before: usize,
    pub events_after: usize,
    /// Events without a country label; they cannot be ranked and are dropped.
    pub unlabeled_dropped: usize,
}

impl SourceFilterStats {
    pub fn user_retention(&self) -> f64 {
        ratio(self.users_after, self.users_before)
    }

    pub fn event_retention(&self) -> f64 {
        ratio(self.events_after, self.events_before)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        1.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone)]
pub struct SourceFilterOutcome {
    /// Per country, sources in rank order with their retention flag.
    pub rankings: BTreeMap<CountryCode, Vec<SourceRank>>,
    pub retained: RetainedSources,
    pub events: Vec<GeoEvent>,
    pub stats: SourceFilterStats,
}

/// Per-country source rankings, most popular first; ties by source name.
pub fn rank_sources(events: &[GeoEvent], weight: PopularityWeight) -> BTreeMap<CountryCode, Vec<SourceRank>> {
    let mut agg: BTreeMap<(&CountryCode, &str), (BTreeSet<&str>, u64)> = BTreeMap::new();
    for e in events {
        if let Some(c) = &e.country {
            let slot = agg.entry((c, e.source.as_str())).or_default();
            slot.0.insert(e.user_id.as_str());
            slot.1 += 1;
        }
    }
    let mut out: BTreeMap<CountryCode, Vec<SourceRank>> = BTreeMap::new();
    for ((c, s), (users, n)) in agg {
        out.entry(c.clone()).or_default().push(SourceRank {
            source: s.to_string(),
            users: users.len() as u64,
            events: n,
            retained: false,
        });
    }
    for ranking in out.values_mut() {
        ranking.sort_by(|a, b| b.mass(weight).cmp(&a.mass(weight)).then_with(|| a.source.cmp(&b.source)));
    }
    out
}

/// Number of leading entries of `ranking` needed for their cumulative mass to
/// reach `coverage` of the total.
pub fn coverage_cutoff(ranking: &[SourceRank], coverage: f64, weight: PopularityWeight) -> usize {
    let total: u64 = ranking.iter().map(|r| r.mass(weight)).sum();
    if total == 0 {
        return 0;
    }
    let target = coverage * total as f64;
    // absorbs representation error in coverage * total (0.95 * 100 etc.)
    let slack = 1e-9 * total as f64;
    let mut cum = 0u64;
    for (i, r) in ranking.iter().enumerate() {
        if cum as f64 >= target - slack {
            return i;
        }
        cum += r.mass(weight);
    }
    ranking.len()
}

/// Ranks sources per country and drops events from sources outside the
/// covering head of the ranking.
pub fn source_popularity_filter(
    events: Vec<GeoEvent>,
    coverage: f64,
    weight: PopularityWeight,
) -> Result<SourceFilterOutcome, CleanError> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(CleanError::Coverage(coverage));
    }
    let mut rankings = rank_sources(&events, weight);
    let mut retained = RetainedSources::default();
    for (c, ranking) in rankings.iter_mut() {
        let k = coverage_cutoff(ranking, coverage, weight);
        let set = retained.0.entry(c.clone()).or_default();
        for r in ranking.iter_mut().take(k) {
            r.retained = true;
            set.insert(r.source.clone());
        }
    }
    let (events, stats) = apply_source_filter(events, &retained);
    Ok(SourceFilterOutcome { rankings, retained, events, stats })
}

/// Keeps only events whose (country, source) pair is in `retained`.
pub fn apply_source_filter(events: Vec<GeoEvent>, retained: &RetainedSources) -> (Vec<GeoEvent>, SourceFilterStats) {
    let users_before = events.iter().map(|e| e.user_id.as_str()).collect::<BTreeSet<_>>().len();
    let events_before = events.len();
    let unlabeled_dropped = events.iter().filter(|e| e.country.is_none()).count();
    let kept: Vec<GeoEvent> = events
        .into_par_iter()
        .filter(|e| e.country.as_ref().is_some_and(|c| retained.contains(c, &e.source)))
        .collect();
    let users_after = kept.iter().map(|e| e.user_id.as_str()).collect::<BTreeSet<_>>().len();
    let stats = SourceFilterStats { users_before, users_after, events_before, events_after: kept.len(), unlabeled_dropped };
    (kept, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::country::cc;
    use crate::ingest::build_trajectories;
    use proptest::prelude::*;

    fn at(u: &str, t: i64, lat: f64, lon: f64) -> GeoEvent {
        GeoEvent::new(u, t, lat, lon, "web", None).unwrap()
    }

    fn traj(evs: Vec<GeoEvent>) -> Trajectory {
        Trajectory::new(evs[0].user_id.clone(), evs).unwrap()
    }

    #[test]
    fn keeps_plausible_pair() {
        let t = traj(vec![at("u", 0, 0.0, 0.0), at("u", 3600, 0.0, 1.0)]);
        let (f, removed) = speed_filter(&t, 1000.0);
        assert_eq!((f.len(), removed), (2, 0));
        assert!((speed_kmh(&t.events()[0], &t.events()[1]) - 111.195).abs() < 1e-3);
    }

    #[test]
    fn drops_later_event_of_teleport() {
        let t = traj(vec![at("u", 0, 0.0, 0.0), at("u", 3600, 0.0, 20.0)]);
        assert!((speed_kmh(&t.events()[0], &t.events()[1]) - 2223.9).abs() < 0.1);
        let (f, removed) = speed_filter(&t, 1000.0);
        assert_eq!(removed, 1);
        assert_eq!(f.events()[0].position.lon, 0.0);
    }

    #[test]
    fn compares_against_last_retained() {
        // the spike is dropped, and the return is judged against the origin
        let t = traj(vec![at("u", 0, 0.0, 0.0), at("u", 3600, 0.0, 40.0), at("u", 7200, 0.0, 0.5)]);
        let (f, removed) = speed_filter(&t, 1000.0);
        assert_eq!(removed, 1);
        assert_eq!(f.events().iter().map(|e| e.position.lon).collect::<Vec<_>>(), vec![0.0, 0.5]);
    }

    #[test]
    fn zero_gap_rules() {
        let same = traj(vec![at("u", 5, 1.0, 1.0), at("u", 5, 1.0, 1.0)]);
        assert_eq!(speed_filter(&same, 1000.0).1, 0);
        let moved = traj(vec![at("u", 5, 1.0, 1.0), at("u", 5, 1.0, 1.0001)]);
        assert_eq!(speed_filter(&moved, 1000.0).1, 1);
    }

    #[test]
    fn single_event_unchanged() {
        let t = traj(vec![at("u", 0, 10.0, 10.0)]);
        assert_eq!(speed_filter(&t, 1000.0), (t.clone(), 0));
    }

    fn with_users(counts: &[(&str, usize)]) -> Vec<GeoEvent> {
        let mut out = Vec::new();
        let mut uid = 0;
        for &(src, n) in counts {
            for _ in 0..n {
                out.push(GeoEvent::new(format!("u{uid}"), 0, 0.0, 0.0, src, Some(cc("AA"))).unwrap());
                uid += 1;
            }
        }
        out
    }

    fn retained_names(out: &SourceFilterOutcome) -> Vec<String> {
        out.retained.0.get(&cc("AA")).map(|s| s.iter().cloned().collect()).unwrap_or_default()
    }

    #[test]
    fn cumulative_walk_examples() {
        let out = source_popularity_filter(with_users(&[("A", 90), ("B", 9), ("C", 1)]), 0.95, PopularityWeight::Users).unwrap();
        assert_eq!(retained_names(&out), vec!["A", "B"]);
        assert_eq!(out.stats.users_after, 99);
        let out = source_popularity_filter(with_users(&[("solo", 3)]), 0.95, PopularityWeight::Users).unwrap();
        assert_eq!(retained_names(&out), vec!["solo"]);
        let out = source_popularity_filter(with_users(&[("A", 50), ("B", 50)]), 0.95, PopularityWeight::Users).unwrap();
        assert_eq!(retained_names(&out), vec!["A", "B"]);
    }

    #[test]
    fn exact_threshold_stops_the_walk() {
        // 95 of 100 reached exactly after the first source
        let out = source_popularity_filter(with_users(&[("A", 95), ("B", 3), ("C", 2)]), 0.95, PopularityWeight::Users).unwrap();
        assert_eq!(retained_names(&out), vec!["A"]);
    }

    #[test]
    fn ties_rank_by_name_and_event_mode_differs() {
        let mut evs = with_users(&[("b", 5), ("a", 5)]);
        let r = rank_sources(&evs, PopularityWeight::Users);
        assert_eq!(r[&cc("AA")].iter().map(|s| s.source.as_str()).collect::<Vec<_>>(), vec!["a", "b"]);
        // one heavy user on "b"
        for _ in 0..100 {
            evs.push(GeoEvent::new("u0", 1, 0.0, 0.0, "b", Some(cc("AA"))).unwrap());
        }
        let r = rank_sources(&evs, PopularityWeight::Events);
        assert_eq!(r[&cc("AA")][0].source, "b");
    }

    #[test]
    fn rankings_are_per_country_and_unlabeled_events_drop() {
        let mut evs = with_users(&[("A", 10)]);
        evs.push(GeoEvent::new("x", 0, 0.0, 0.0, "Z", Some(cc("BB"))).unwrap());
        evs.push(GeoEvent::new("y", 0, 0.0, 0.0, "A", None).unwrap());
        let out = source_popularity_filter(evs, 0.95, PopularityWeight::Users).unwrap();
        assert!(out.retained.contains(&cc("BB"), "Z"));
        assert!(!out.retained.contains(&cc("BB"), "A"));
        assert_eq!(out.stats.unlabeled_dropped, 1);
        assert_eq!(out.events.len(), 11);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(source_popularity_filter(vec![], 0.0, PopularityWeight::Users).is_err());
        assert!(source_popularity_filter(vec![], 1.5, PopularityWeight::Users).is_err());
        assert!(speed_filter_all(&BTreeMap::new(), 0.0).is_err());
    }

    fn arb_events() -> impl Strategy<Value = Vec<GeoEvent>> {
        proptest::collection::vec((0u8..6, 0i64..50_000, -3.0f64..3.0, -3.0f64..3.0, 0u8..5, 0u8..2), 1..80).prop_map(|v| {
            v.into_iter()
                .map(|(u, t, la, lo, s, c)| {
                    GeoEvent::new(format!("u{u}"), t, la, lo, format!("s{s}"), Some(cc(["AA", "BB"][c as usize]))).unwrap()
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn speed_filter_output_is_valid_and_idempotent(evs in arb_events(), vmax in 50.0f64..2000.0) {
            for t in build_trajectories(evs).values() {
                let (f, _) = speed_filter(t, vmax);
                for w in f.events().windows(2) {
                    prop_assert!(speed_kmh(&w[0], &w[1]) <= vmax);
                }
                let (g, removed) = speed_filter(&f, vmax);
                prop_assert_eq!(removed, 0);
                prop_assert_eq!(g, f);
            }
        }

        #[test]
        fn frozen_source_filter_is_idempotent(evs in arb_events(), cov in 0.05f64..=1.0) {
            let out = source_popularity_filter(evs, cov, PopularityWeight::Users).unwrap();
            let (again, stats) = apply_source_filter(out.events.clone(), &out.retained);
            prop_assert_eq!(&again, &out.events);
            prop_assert_eq!(stats.events_after, stats.events_before);
        }

        #[test]
        fn higher_coverage_never_shrinks_retained_set(evs in arb_events(), a in 0.05f64..=1.0, b in 0.05f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let r_lo = source_popularity_filter(evs.clone(), lo, PopularityWeight::Users).unwrap().retained;
            let r_hi = source_popularity_filter(evs, hi, PopularityWeight::Users).unwrap().retained;
            for (c, set) in &r_lo.0 {
                prop_assert!(set.is_subset(&r_hi.0[c]));
            }
        }
    }
}
