//! Seeded synthetic worlds: planted gravity flows, planted blocks, event
//! streams with known residences, and power-law samples.
//!
//! Every random draw comes from a ChaCha8 generator seeded with the world
//! seed. World construction uses stream 0, the per-user plan (residence,
//! mobility, destination) the last stream, and user `i` expands its events
//! on stream `i + 1`, so output does not depend on how users are spread over
//! threads.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::country::CountryCode;
use crate::geo::{destination_point, haversine_km, LatLon};
use crate::ingest::{write_events, GeoEvent};
use crate::network::{FlowEdge, FlowNetwork};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("capitals of {0} and {1} are less than 1 km apart")]
    CoincidentCapitals(CountryCode, CountryCode),
    #[error("could not place {0} capitals at the requested separation")]
    Placement(usize),
    #[error("invalid event settings: {0}")]
    InvalidEvents(String),
    #[error("writing synthetic output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravityParams {
    pub a: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for GravityParams {
    fn default() -> Self {
        Self { a: 2.0, alpha: 0.8, beta: 0.6, gamma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCountry {
    pub code: CountryCode,
    pub population: f64,
    pub capital: LatLon,
    /// Planted share of the population that uses the service.
    pub penetration: f64,
    pub gdp_per_capita: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthWorld {
    /// Sorted by code.
    pub countries: Vec<SynthCountry>,
    /// Planted block of each country, parallel to `countries`.
    pub blocks: Vec<usize>,
    pub gravity: GravityParams,
    /// Multiplier on flows between countries of the same block.
    pub block_boost: f64,
    pub seed: u64,
}

/// Settings for [`SynthWorld::generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub countries: usize,
    pub blocks: usize,
    pub seed: u64,
    pub gravity: GravityParams,
    pub block_boost: f64,
    pub min_capital_separation_km: f64,
    /// Capitals of a block lie within this distance of the block center.
    pub block_radius_km: f64,
    pub population_range: (f64, f64),
    pub penetration_range: (f64, f64),
    pub gdp_range: (f64, f64),
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            countries: 12,
            blocks: 3,
            seed: 1,
            gravity: GravityParams::default(),
            block_boost: 1.0,
            min_capital_separation_km: 200.0,
            block_radius_km: 1500.0,
            population_range: (1e6, 1e8),
            penetration_range: (0.001, 0.02),
            gdp_range: (1_000.0, 60_000.0),
        }
    }
}

/// Two-letter code for index `i`: AA, AB, ..., AZ, BA, ...
pub fn synth_code(i: usize) -> CountryCode {
    let a = (b'A' + (i / 26 % 26) as u8) as char;
    let b = (b'A' + (i % 26) as u8) as char;
    let mut s = String::from(a);
    s.push(b);
    if i >= 26 * 26 {
        s.push_str(&(i / (26 * 26)).to_string());
    }
    s.parse().expect("synthetic codes are valid")
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn random_surface_point(rng: &mut ChaCha8Rng, max_abs_lat: f64) -> LatLon {
    let zmax = max_abs_lat.to_radians().sin();
    let z: f64 = rng.random_range(-zmax..=zmax);
    let lon: f64 = rng.random_range(-180.0..180.0);
    LatLon::new(z.asin().to_degrees(), lon)
}

impl SynthWorld {
    /// Random world: countries in contiguous blocks, capitals clustered by
    /// block, penetration rising with GDP per capita.
    pub fn generate(cfg: &WorldConfig) -> Result<Self, SynthError> {
        if cfg.countries < 2 || cfg.blocks == 0 || cfg.blocks > cfg.countries {
            return Err(SynthError::InvalidWorld("need 2+ countries and 1..=countries blocks".into()));
        }
        let (p0, p1) = cfg.penetration_range;
        if !(p0 > 0.0 && p0 <= p1 && p1 <= 1.0) {
            return Err(SynthError::InvalidWorld("penetration range must lie in (0, 1]".into()));
        }
        let (g0, g1) = cfg.gdp_range;
        let (q0, q1) = cfg.population_range;
        if !(g0 > 0.0 && g0 <= g1 && q0 > 0.0 && q0 <= q1) {
            return Err(SynthError::InvalidWorld("population and gdp ranges must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let blocks: Vec<usize> = (0..cfg.countries).map(|k| k * cfg.blocks / cfg.countries).collect();

        let mut centers: Vec<LatLon> = Vec::new();
        let center_sep = 2.5 * cfg.block_radius_km;
        for _ in 0..cfg.blocks {
            let c = (0..10_000)
                .map(|_| random_surface_point(&mut rng, 60.0))
                .find(|p| centers.iter().all(|c| haversine_km(*c, *p) >= center_sep))
                .ok_or(SynthError::Placement(cfg.countries))?;
            centers.push(c);
        }
        let mut capitals: Vec<LatLon> = Vec::new();
        for k in 0..cfg.countries {
            let center = centers[blocks[k]];
            let p = (0..10_000)
                .map(|_| {
                    let d = cfg.block_radius_km * rng.random::<f64>().sqrt();
                    destination_point(center, rng.random_range(0.0..360.0), d)
                })
                .find(|p| capitals.iter().all(|c| haversine_km(*c, *p) >= cfg.min_capital_separation_km))
                .ok_or(SynthError::Placement(cfg.countries))?;
            capitals.push(p);
        }
        // penetration = p0 (gdp / g0)^k, reaching p1 at g1
        let k = if g1 > g0 { (p1 / p0).ln() / (g1 / g0).ln() } else { 0.0 };
        let countries = (0..cfg.countries)
            .map(|i| {
                let population = log_uniform(&mut rng, cfg.population_range).round().max(1.0);
                let gdp = log_uniform(&mut rng, cfg.gdp_range);
                SynthCountry {
                    code: synth_code(i),
                    population,
                    capital: capitals[i],
                    penetration: (p0 * (gdp / g0).powf(k)).min(1.0),
                    gdp_per_capita: gdp,
                }
            })
            .collect();
        let world = Self { countries, blocks, gravity: cfg.gravity, block_boost: cfg.block_boost, seed: cfg.seed };
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidWorld(m.into()));
        if self.blocks.len() != self.countries.len() {
            return bad("one block per country");
        }
        if !self.countries.windows(2).all(|w| w[0].code < w[1].code) {
            return bad("countries must be sorted by unique code");
        }
        if !(self.block_boost >= 1.0) {
            return bad("block_boost must be at least 1");
        }
        for c in &self.countries {
            if !(c.population > 0.0 && c.population.is_finite()) {
                return bad("populations must be positive");
            }
            if !(c.penetration > 0.0 && c.penetration <= 1.0) {
                return bad("penetrations must lie in (0, 1]");
            }
        }
        Ok(())
    }

    pub fn codes(&self) -> Vec<CountryCode> {
        self.countries.iter().map(|c| c.code.clone()).collect()
    }
}

/// Dense flow matrix over the world's countries, in code order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowMatrix {
    pub codes: Vec<CountryCode>,
    pub values: Vec<Vec<f64>>,
}

impl FlowMatrix {
    pub fn row_sum(&self, i: usize) -> f64 {
        self.values[i].iter().sum()
    }

    /// Network whose estimated weights are the matrix entries.
    pub fn to_network(&self) -> FlowNetwork {
        let mut edges = Vec::new();
        for (i, o) in self.codes.iter().enumerate() {
            for (j, d) in self.codes.iter().enumerate() {
                let w = self.values[i][j];
                if i != j && w > 0.0 {
                    edges.push(FlowEdge { origin: o.clone(), destination: d.clone(), raw_weight: 0, est_weight: w });
                }
            }
        }
        FlowNetwork { nodes: self.codes.iter().cloned().collect(), edges, normalized: true, ..Default::default() }
    }
}

/// `F_ij = A p_i^alpha p_j^beta / r_ij^gamma`, times the block boost for
/// pairs in the same block; zero diagonal.
#[allow(clippy::needless_range_loop)]
pub fn expected_flows(world: &SynthWorld) -> Result<FlowMatrix, SynthError> {
    let n = world.countries.len();
    let g = world.gravity;
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (ci, cj) = (&world.countries[i], &world.countries[j]);
            let r = haversine_km(ci.capital, cj.capital);
            if r < 1.0 {
                return Err(SynthError::CoincidentCapitals(ci.code.clone(), cj.code.clone()));
            }
            let boost = if world.blocks[i] == world.blocks[j] { world.block_boost } else { 1.0 };
            values[i][j] = boost * g.a * ci.population.powf(g.alpha) * cj.population.powf(g.beta) / r.powf(g.gamma);
        }
    }
    Ok(FlowMatrix { codes: world.codes(), values })
}

/// Value of the truncated power-law quantile function at `u` in [0, 1).
pub fn power_law_quantile(u: f64, exponent: f64, xmin: f64, xmax: f64) -> f64 {
    let a = exponent - 1.0;
    let tail = (xmin / xmax).powf(a);
    (xmin * (1.0 - u * (1.0 - tail)).powf(-1.0 / a)).min(xmax)
}

/// `n` draws from `p(x) ~ x^-exponent` on `[xmin, xmax]` by inverse CDF.
pub fn sample_power_law(seed: u64, exponent: f64, xmin: f64, xmax: f64, n: usize) -> Vec<f64> {
    assert!(exponent > 1.0 && xmin > 0.0 && xmin < xmax, "need exponent > 1 and 0 < xmin < xmax");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| power_law_quantile(rng.random::<f64>(), exponent, xmin, xmax)).collect()
}

/// How home events are spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HomeMotion {
    /// Independent Gaussian offsets around a home point near the capital.
    Jitter { sigma_km: f64 },
    /// Consecutive home events displaced by power-law distributed steps.
    LevyWalk { exponent: f64, xmin_km: f64, xmax_km: f64 },
}

/// How many users each country gets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserAllocation {
    PerCountry(usize),
    /// Split in proportion to `penetration * population`, at least one each.
    Total(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventConfig {
    pub users: UserAllocation,
    /// Mean events per user; counts are uniform on [mean/2, 3 mean/2], at least 3.
    pub events_per_user: usize,
    /// Mobility probability of the country with the highest outflow per capita.
    pub trip_rate: f64,
    pub home_motion: HomeMotion,
    /// Events fall inside this calendar year (UTC).
    pub year: i32,
    pub min_gap_s: i64,
    /// Share of extra users per country that are bots.
    pub bot_fraction: f64,
    pub bot_sources: usize,
    pub bot_events_per_user: usize,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            users: UserAllocation::Total(2_000),
            events_per_user: 50,
            trip_rate: 0.3,
            home_motion: HomeMotion::Jitter { sigma_km: 10.0 },
            year: 2012,
            min_gap_s: 3_600,
            bot_fraction: 0.0,
            bot_sources: 5,
            bot_events_per_user: 150,
        }
    }
}

/// Client names and their shares among ordinary users.
pub const USER_SOURCES: [(&str, f64); 3] = [("web", 0.6), ("android", 0.3), ("iphone", 0.1)];

/// Ground truth for one generated stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    /// Planted residence of every non-bot user.
    pub residences: BTreeMap<String, CountryCode>,
    /// Users drawn as mobile.
    pub mobile: BTreeMap<String, bool>,
    pub planted_mobility: BTreeMap<CountryCode, f64>,
    pub residents: BTreeMap<CountryCode, usize>,
    pub bot_sources: Vec<String>,
}

pub struct SynthOutput {
    pub events: Vec<GeoEvent>,
    pub truth: SynthTruth,
}

const MAX_LEG_SPEED_KMH: f64 = 900.0;
const JITTER_CLAMP_KM: f64 = 50.0;

fn allocate(world: &SynthWorld, users: UserAllocation) -> Vec<usize> {
    match users {
        UserAllocation::PerCountry(n) => vec![n; world.countries.len()],
        UserAllocation::Total(total) => {
            let n = world.countries.len();
            let w: Vec<f64> = world.countries.iter().map(|c| c.penetration * c.population).collect();
            let sum: f64 = w.iter().sum();
            let spare = total.saturating_sub(n) as f64;
            let mut out: Vec<usize> = w.iter().map(|x| 1 + (spare * x / sum).floor() as usize).collect();
            // largest remainder, ties to the lower index
            let mut rem: Vec<(f64, usize)> =
                w.iter().enumerate().map(|(i, x)| (spare * x / sum - (spare * x / sum).floor(), i)).collect();
            rem.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let short = total.max(n) - out.iter().sum::<usize>();
            for &(_, i) in rem.iter().take(short) {
                out[i] += 1;
            }
            out
        }
    }
}

/// Mobility probability per country: proportional to expected outflow per
/// capita, scaled so the largest equals `trip_rate`.
pub fn planted_mobility(world: &SynthWorld, flows: &FlowMatrix, trip_rate: f64) -> Vec<f64> {
    let per_capita: Vec<f64> =
        (0..world.countries.len()).map(|i| flows.row_sum(i) / world.countries[i].population).collect();
    let max = per_capita.iter().copied().fold(0.0, f64::max);
    per_capita.iter().map(|v| if max > 0.0 { trip_rate * v / max } else { 0.0 }).collect()
}

struct UserPlan<'a> {
    id: String,
    home: usize,
    kind: UserKind<'a>,
}

enum UserKind<'a> {
    Ordinary { dest: Option<&'a WeightedIndex<f64>> },
    Bot { source: String },
}

fn jitter(rng: &mut ChaCha8Rng, center: LatLon, sigma_km: f64) -> LatLon {
    let normal = Normal::new(0.0, sigma_km.max(0.0)).expect("finite sigma");
    let d = normal.sample(rng).abs().min(JITTER_CLAMP_KM);
    destination_point(center, rng.random_range(0.0..360.0), d)
}

// Spreads events over the year: each gap gets its required minimum plus a
// share of the remaining slack.
fn timeline(rng: &mut ChaCha8Rng, start: i64, span: i64, required: &[i64]) -> Vec<i64> {
    let slack = (span - 1 - required.iter().sum::<i64>()).max(0) as f64;
    let e: Vec<f64> = (0..=required.len() + 1).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = e.iter().sum();
    let mut t = start + (slack * e[0] / total) as i64;
    let mut out = vec![t];
    for (k, r) in required.iter().enumerate() {
        t += r + (slack * e[k + 1] / total) as i64;
        out.push(t);
    }
    out
}

fn user_events(
    world: &SynthWorld,
    cfg: &EventConfig,
    plan: &UserPlan,
    rng: &mut ChaCha8Rng,
    start: i64,
    span: i64,
) -> (Vec<GeoEvent>, bool) {
    let home = &world.countries[plan.home];
    let sigma = match cfg.home_motion {
        HomeMotion::Jitter { sigma_km } => sigma_km,
        HomeMotion::LevyWalk { .. } => 10.0,
    };
    let anchor = jitter(rng, home.capital, sigma);
    let (n, source, mut foreign) = match &plan.kind {
        UserKind::Bot { source } => (cfg.bot_events_per_user.max(1), source.clone(), None),
        UserKind::Ordinary { dest } => {
            let mean = cfg.events_per_user.max(3);
            let n = rng.random_range((mean / 2).max(3)..=(3 * mean / 2).max(3));
            let src = USER_SOURCES.map(|s| s.1);
            let source = USER_SOURCES[WeightedIndex::new(src).expect("positive shares").sample(rng)].0.to_string();
            let foreign = dest.map(|d| {
                let j = d.sample(rng);
                // strictly fewer foreign than home events
                let k = rng.random_range(1..=3usize.min((n - 1) / 2));
                (j, k)
            });
            (n, source, foreign)
        }
    };
    let mobile = foreign.is_some();
    // positions in order: home events, with a single foreign visit inserted
    let mut places: Vec<(LatLon, usize)> = Vec::with_capacity(n);
    let n_home = n - foreign.map_or(0, |f| f.1);
    let visit_at = foreign.map(|_| rng.random_range(1..n_home));
    let mut pos = anchor;
    for h in 0..n_home {
        if Some(h) == visit_at {
            if let Some((j, k)) = foreign.take() {
                let cap = world.countries[j].capital;
                for _ in 0..k {
                    places.push((jitter(rng, cap, sigma), j));
                }
            }
        }
        let p = match cfg.home_motion {
            HomeMotion::Jitter { sigma_km } if h > 0 => jitter(rng, anchor, sigma_km),
            HomeMotion::LevyWalk { exponent, xmin_km, xmax_km } if h > 0 => {
                let step = power_law_quantile(rng.random::<f64>(), exponent, xmin_km, xmax_km);
                pos = destination_point(pos, rng.random_range(0.0..360.0), step);
                pos
            }
            _ => anchor,
        };
        places.push((p, plan.home));
    }
    let required: Vec<i64> = places
        .windows(2)
        .map(|w| {
            let travel = haversine_km(w[0].0, w[1].0) / MAX_LEG_SPEED_KMH * 3600.0;
            cfg.min_gap_s.max(travel.ceil() as i64)
        })
        .collect();
    let times = timeline(rng, start, span, &required);
    let events = places
        .iter()
        .zip(times)
        .map(|(&(p, c), t)| {
            let code = world.countries[c].code.clone();
            GeoEvent::new(plan.id.clone(), t, p.lat, p.lon, source.clone(), Some(code)).expect("valid synthetic event")
        })
        .collect();
    (events, mobile)
}

/// Event stream with planted residences, trips drawn from the flow rows of
/// `expected_flows`, and optional bot accounts.
pub fn generate_events(world: &SynthWorld, cfg: &EventConfig) -> Result<SynthOutput, SynthError> {
    world.validate()?;
    if !(0.0..=1.0).contains(&cfg.trip_rate) || !(0.0..1.0).contains(&cfg.bot_fraction) {
        return Err(SynthError::InvalidEvents("trip_rate in [0, 1], bot_fraction in [0, 1)".into()));
    }
    if cfg.bot_fraction > 0.0 && cfg.bot_sources == 0 {
        return Err(SynthError::InvalidEvents("bots need at least one bot source".into()));
    }
    if let HomeMotion::LevyWalk { exponent, xmin_km, xmax_km } = cfg.home_motion {
        if !(exponent > 1.0 && xmin_km > 0.0 && xmin_km < xmax_km) {
            return Err(SynthError::InvalidEvents("levy walk needs exponent > 1, 0 < xmin < xmax".into()));
        }
    }
    let (start, days) = crate::metrics::year_bounds(cfg.year)
        .ok_or_else(|| SynthError::InvalidEvents(format!("year {} out of range", cfg.year)))?;
    let span = days as i64 * 86_400;
    let flows = expected_flows(world)?;
    let rows: Vec<Option<WeightedIndex<f64>>> =
        flows.values.iter().map(|r| WeightedIndex::new(r.iter().copied()).ok()).collect();
    let mobility = planted_mobility(world, &flows, cfg.trip_rate);
    let counts = allocate(world, cfg.users);

    let mut rng = ChaCha8Rng::seed_from_u64(world.seed);
    rng.set_stream(u64::MAX);
    let bot_names: Vec<String> = (0..cfg.bot_sources).map(|b| format!("bot-{b:02}")).collect();
    let mut plans = Vec::new();
    let mut truth = SynthTruth {
        residences: BTreeMap::new(),
        mobile: BTreeMap::new(),
        planted_mobility: world.codes().into_iter().zip(mobility.iter().copied()).collect(),
        residents: BTreeMap::new(),
        bot_sources: if cfg.bot_fraction > 0.0 { bot_names.clone() } else { Vec::new() },
    };
    let width = (counts.iter().sum::<usize>() * 2).to_string().len().max(6);
    let mut next = 0usize;
    for (i, &n) in counts.iter().enumerate() {
        let code = &world.countries[i].code;
        truth.residents.insert(code.clone(), n);
        for _ in 0..n {
            let id = format!("u{next:0width$}");
            next += 1;
            let dest = (rng.random::<f64>() < mobility[i]).then(|| rows[i].as_ref()).flatten();
            truth.residences.insert(id.clone(), code.clone());
            plans.push(UserPlan { id, home: i, kind: UserKind::Ordinary { dest } });
        }
        // bots are this share of all users of the country, spread round-robin
        let bots = (cfg.bot_fraction * n as f64 / (1.0 - cfg.bot_fraction)).floor() as usize;
        for b in 0..bots {
            let id = format!("b{next:0width$}");
            next += 1;
            plans.push(UserPlan { id, home: i, kind: UserKind::Bot { source: bot_names[b % bot_names.len()].clone() } });
        }
    }
    let generated: Vec<(Vec<GeoEvent>, bool)> = plans
        .par_iter()
        .enumerate()
        .map(|(k, plan)| {
            let mut rng = ChaCha8Rng::seed_from_u64(world.seed);
            rng.set_stream(k as u64 + 1);
            user_events(world, cfg, plan, &mut rng, start, span)
        })
        .collect();
    let mut events = Vec::new();
    for (plan, (evs, mobile)) in plans.iter().zip(generated) {
        if matches!(plan.kind, UserKind::Ordinary { .. }) {
            truth.mobile.insert(plan.id.clone(), mobile);
        }
        events.extend(evs);
    }
    Ok(SynthOutput { events, truth })
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), SynthError> {
    std::fs::write(dir.join(name), body)?;
    Ok(())
}

/// Writes the event stream and its truth sidecars into `dir`:
/// `events.csv`, `census.csv`, `capitals.csv`, `residences.csv`,
/// `blocks.csv`, `mobility.csv`, `bot_sources.csv`, `gravity.json`, `world.json`.
pub fn write_synth_dir(dir: &Path, world: &SynthWorld, out: &SynthOutput) -> Result<(), SynthError> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("events.csv"))?);
    write_events(&mut f, &out.events).map_err(|e| SynthError::Io(std::io::Error::other(e.to_string())))?;
    f.flush()?;
    let mut census = String::from("code,population,gdp_per_capita\n");
    let mut capitals = String::from("code,lat,lon\n");
    let mut blocks = String::from("country,block\n");
    for (c, b) in world.countries.iter().zip(&world.blocks) {
        census += &format!("{},{},{}\n", c.code, c.population, c.gdp_per_capita);
        capitals += &format!("{},{},{}\n", c.code, c.capital.lat, c.capital.lon);
        blocks += &format!("{},{}\n", c.code, b);
    }
    let mut residences = String::from("user_id,country\n");
    for (u, c) in &out.truth.residences {
        residences += &format!("{u},{c}\n");
    }
    let mut mobility = String::from("country,residents,planted_rate\n");
    for (c, m) in &out.truth.planted_mobility {
        mobility += &format!("{c},{},{m}\n", out.truth.residents.get(c).copied().unwrap_or(0));
    }
    let mut bots = String::from("source\n");
    for s in &out.truth.bot_sources {
        bots += &format!("{s}\n");
    }
    write_file(dir, "census.csv", &census)?;
    write_file(dir, "capitals.csv", &capitals)?;
    write_file(dir, "blocks.csv", &blocks)?;
    write_file(dir, "residences.csv", &residences)?;
    write_file(dir, "mobility.csv", &mobility)?;
    write_file(dir, "bot_sources.csv", &bots)?;
    write_file(dir, "gravity.json", &pretty_json(&world.gravity))?;
    write_file(dir, "world.json", &pretty_json(world))?;
    Ok(())
}

fn pretty_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes") + "\n"
}
