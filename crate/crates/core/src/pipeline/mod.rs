//! Stage-by-stage pipeline over flat files.
//!
//! Stages run in the order ingest, clean, profile, metrics, network,
//! communities, fit. Each reads its predecessors' artifacts from the output
//! directory, so any stage can be rerun alone once they exist. All artifacts
//! are written in a fixed order with sorted keys and do not depend on the
//! worker count.

mod tables;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::clean::{source_popularity_filter, speed_filter_all};
use crate::community::{hierarchical_partition, OptimizerConfig, WeightedDigraph};
use crate::config::Config;
use crate::country::CountryCode;
use crate::ingest::{
    assign_countries, build_trajectories, parse_events, write_events, BoundaryIndex, EventFormat, GeoEvent, HeaderMode,
    Trajectory,
};
use crate::metrics::{
    daily_abroad_series, displacements, is_mobile, mobility_profiles, user_gyration, year_bounds, Direction,
};
use crate::models::{
    capital_distances, fit_gravity, fit_power_law, fit_power_law_truncated, log_binned_fit, loglog_regression,
    read_capitals, read_reference, validate_external, GravityFit, PowerLawFit,
};
use crate::network::{
    build_flow_network, inflow_outflow_balance, normalize_and_filter, top_k_flows, FlowEdge, FlowNetwork, FlowWeight,
    NetworkFilter,
};
use crate::numeric::exact_sum;
use crate::residence::{compute_country_stats, Census, ResidenceThresholds, UserProfile};

pub use tables::*;

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Clean,
    Profile,
    Metrics,
    Network,
    Communities,
    Fit,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Ingest, Stage::Clean, Stage::Profile, Stage::Metrics, Stage::Network, Stage::Communities, Stage::Fit];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Clean => "clean",
            Stage::Profile => "profile",
            Stage::Metrics => "metrics",
            Stage::Network => "network",
            Stage::Communities => "communities",
            Stage::Fit => "fit",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "residence" {
            return Ok(Stage::Profile);
        }
        Stage::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

/// Artifact file names.
pub mod files {
    pub const EVENTS: &str = "events.csv";
    pub const INGEST_ERRORS: &str = "ingest_errors.csv";
    pub const CLEAN_EVENTS: &str = "clean_events.csv";
    pub const SOURCE_RANKING: &str = "source_ranking.csv";
    pub const CLEANING_REPORT: &str = "cleaning_report.json";
    pub const USER_COUNTRIES: &str = "user_countries.csv";
    pub const PROFILES: &str = "profiles.csv";
    pub const COUNTRY_STATS: &str = "country_stats.csv";
    pub const MOBILITY: &str = "mobility_profiles.csv";
    pub const GYRATION: &str = "gyration.csv";
    pub const DISPLACEMENTS: &str = "displacements.csv";
    pub const DAILY_OUTBOUND: &str = "daily_outbound.csv";
    pub const DAILY_INBOUND: &str = "daily_inbound.csv";
    pub const DAILY_OUTBOUND_WIDE: &str = "daily_outbound_wide.csv";
    pub const DAILY_INBOUND_WIDE: &str = "daily_inbound_wide.csv";
    pub const EDGES_RAW: &str = "edges_raw.csv";
    pub const EDGES: &str = "edges.csv";
    pub const NODES: &str = "nodes.csv";
    pub const BALANCE: &str = "balance.csv";
    pub const TOP_FLOWS: &str = "top_flows.csv";
    pub const COMMUNITIES: &str = "communities.csv";
    pub const MODULARITY: &str = "modularity.csv";
    pub const GRAVITY_FIT: &str = "gravity_fit.json";
    pub const POWERLAW_FIT: &str = "powerlaw_fit.json";
    pub const FITS: &str = "fits.json";
    pub const VALIDATION: &str = "validation.json";
    pub const REPORT: &str = "report.json";
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("missing input file {0}")]
    MissingInput(PathBuf),
    #[error("stage {stage} needs {file} from stage {needs}; run it first")]
    StageOrder { stage: String, needs: Stage, file: PathBuf },
    #[error("{file}: {reason}")]
    Data { file: PathBuf, reason: String },
    #[error("{file}: {source}")]
    Io { file: PathBuf, source: std::io::Error },
}

impl PipelineError {
    pub(crate) fn io(file: &Path, source: std::io::Error) -> Self {
        Self::Io { file: file.to_path_buf(), source }
    }

    pub(crate) fn data(file: &Path, reason: impl fmt::Display) -> Self {
        Self::Data { file: file.to_path_buf(), reason: reason.to_string() }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 3,
            Self::MissingInput(_) => 4,
            Self::StageOrder { .. } => 5,
            Self::Data { .. } => 6,
            Self::Io { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CleaningReport {
    pub max_speed_kmh: f64,
    pub coverage: f64,
    pub events_in: usize,
    pub users_in: usize,
    pub speed_removed: usize,
    pub source_users_before: usize,
    pub source_users_after: usize,
    pub source_events_before: usize,
    pub source_events_after: usize,
    pub unlabeled_dropped: usize,
    pub user_retention: f64,
    pub event_retention: f64,
}

/// Both gravity fits and the power-law fits, as written to `fits.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fits {
    pub gravity: Option<GravityFits>,
    pub gravity_error: Option<String>,
    pub powerlaw: PowerLawFits,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GravityFits {
    /// Raw user flows against resident counts.
    pub raw: GravityFit,
    /// Estimated flows against census populations.
    pub est: GravityFit,
    pub min_distance_km: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerLawFits {
    pub displacement: DistributionFit,
    /// Radius of gyration; absent when too few users move.
    pub gyration: Option<DistributionFit>,
    pub gyration_error: Option<String>,
    /// Penetration against GDP per capita over included countries.
    pub penetration_vs_gdp: Option<crate::models::LogLogFit>,
    pub penetration_vs_gdp_error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionFit {
    pub mle: PowerLawFit,
    pub truncated: Option<PowerLawFit>,
    pub log_binned: Option<crate::models::LogBinnedFit>,
}

pub struct Pipeline {
    pub config: Config,
}

fn require_input(path: &Path) -> Result<(), PipelineError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(PipelineError::MissingInput(path.to_path_buf()))
    }
}

fn open(path: &Path) -> Result<std::fs::File, PipelineError> {
    std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))
}

impl Pipeline {
    pub fn new(config: Config) -> Self {
        Self { config }
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    fn artifact(&self, stage: &str, needs: Stage, name: &str) -> Result<PathBuf, PipelineError> {
        let p = self.out(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(PipelineError::StageOrder { stage: stage.into(), needs, file: p })
        }
    }

    /// Runs `f` on a thread pool of the configured size.
    pub fn with_workers<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| PipelineError::io(&self.config.output_dir, std::io::Error::other(e)))?;
        Ok(pool.install(f))
    }

    fn prepare_output(&self) -> Result<(), PipelineError> {
        std::fs::create_dir_all(&self.config.output_dir).map_err(|e| PipelineError::io(&self.config.output_dir, e))
    }

    pub fn run_stage(&self, stage: Stage) -> Result<(), PipelineError> {
        self.prepare_output()?;
        self.with_workers(|| match stage {
            Stage::Ingest => self.ingest(),
            Stage::Clean => self.clean(),
            Stage::Profile => self.profile(),
            Stage::Metrics => self.metrics(),
            Stage::Network => self.network(),
            Stage::Communities => self.communities(),
            Stage::Fit => self.fit(),
        })?
    }

    /// All stages, then the report.
    pub fn run_all(&self) -> Result<Value, PipelineError> {
        for s in Stage::ALL {
            self.run_stage(s)?;
        }
        self.report()
    }

    fn read_event_artifact(&self, path: &Path) -> Result<Vec<GeoEvent>, PipelineError> {
        let fmt = EventFormat { delimiter: b',', header: HeaderMode::Absent };
        let rep = parse_events(open(path)?, &fmt).map_err(|e| PipelineError::data(path, e))?;
        if let Some(e) = rep.errors.first() {
            return Err(PipelineError::data(path, format!("line {}: {}", e.line, e.reason)));
        }
        Ok(rep.events)
    }

    fn write_event_artifact(&self, path: &Path, events: &[GeoEvent]) -> Result<(), PipelineError> {
        let f = std::fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
        write_events(f, events).map_err(|e| PipelineError::io(path, std::io::Error::other(e)))
    }

    fn ingest(&self) -> Result<(), PipelineError> {
        let c = &self.config.ingest;
        require_input(&c.events)?;
        let fmt = EventFormat { delimiter: c.delimiter as u8, header: c.header };
        let mut rep = parse_events(open(&c.events)?, &fmt).map_err(|e| PipelineError::data(&c.events, e))?;
        if let Some(b) = &c.boundaries {
            require_input(b)?;
            let index = BoundaryIndex::from_geojson(open(b)?).map_err(|e| PipelineError::data(b, e))?;
            assign_countries(&mut rep.events, &index);
        }
        let trajectories = build_trajectories(rep.events);
        let events: Vec<GeoEvent> = trajectories.into_values().flat_map(Trajectory::into_events).collect();
        self.write_event_artifact(&self.out(files::EVENTS), &events)?;
        write_rows(
            &self.out(files::INGEST_ERRORS),
            rep.errors.into_iter().map(|e| IngestErrorRow { line: e.line, reason: e.reason }),
        )
    }

    fn clean(&self) -> Result<(), PipelineError> {
        let c = &self.config.clean;
        let input = self.artifact("clean", Stage::Ingest, files::EVENTS)?;
        let events = self.read_event_artifact(&input)?;
        let (events_in, trajectories) = (events.len(), build_trajectories(events));
        let users_in = trajectories.len();
        let (filtered, speed_removed) =
            speed_filter_all(&trajectories, c.max_speed_kmh).map_err(|e| PipelineError::data(&input, e))?;
        let events: Vec<GeoEvent> = filtered.into_values().flat_map(Trajectory::into_events).collect();
        let outcome =
            source_popularity_filter(events, c.coverage, c.popularity_weight).map_err(|e| PipelineError::data(&input, e))?;
        self.write_event_artifact(&self.out(files::CLEAN_EVENTS), &outcome.events)?;
        let mut ranks = Vec::new();
        for (country, ranking) in &outcome.rankings {
            for (i, r) in ranking.iter().enumerate() {
                ranks.push(SourceRankRow {
                    country: country.clone(),
                    rank: i + 1,
                    source: r.source.clone(),
                    users: r.users,
                    events: r.events,
                    retained: r.retained,
                });
            }
        }
        write_rows(&self.out(files::SOURCE_RANKING), ranks)?;
        let s = outcome.stats;
        let report = CleaningReport {
            max_speed_kmh: c.max_speed_kmh,
            coverage: c.coverage,
            events_in,
            users_in,
            speed_removed,
            source_users_before: s.users_before,
            source_users_after: s.users_after,
            source_events_before: s.events_before,
            source_events_after: s.events_after,
            unlabeled_dropped: s.unlabeled_dropped,
            user_retention: s.user_retention(),
            event_retention: s.event_retention(),
        };
        write_json(&self.out(files::CLEANING_REPORT), &report)
    }

    fn profile(&self) -> Result<(), PipelineError> {
        let input = self.artifact("profile", Stage::Clean, files::CLEAN_EVENTS)?;
        let census_path = &self.config.residence.census;
        require_input(census_path)?;
        let census = Census::read(open(census_path)?).map_err(|e| PipelineError::data(census_path, e))?;
        let trajectories = build_trajectories(self.read_event_artifact(&input)?);
        let profiles = crate::residence::build_profiles(&trajectories);
        let mut uc = Vec::new();
        for p in &profiles {
            for (c, n) in &p.counts {
                uc.push(UserCountryRow {
                    user_id: p.user_id.clone(),
                    country: c.clone(),
                    events: *n,
                    first_seen: p.first_seen[c],
                });
            }
        }
        write_rows(&self.out(files::USER_COUNTRIES), uc)?;
        write_rows(
            &self.out(files::PROFILES),
            profiles.iter().map(|p| ProfileRow {
                user_id: p.user_id.clone(),
                residence: p.residence.clone(),
                total_events: p.total_events(),
                distinct_countries: p.distinct_countries(),
                mobile: is_mobile(p),
            }),
        )?;
        let thresholds = ResidenceThresholds {
            min_penetration: self.config.residence.min_penetration,
            min_residents: self.config.residence.min_residents,
        };
        let stats = compute_country_stats(&profiles, &census, &thresholds);
        write_rows(
            &self.out(files::COUNTRY_STATS),
            stats.into_values().map(|s| CountryStatsRow {
                included: s.included(),
                code: s.code,
                residents: s.residents,
                population: s.population,
                gdp_per_capita: s.gdp_per_capita,
                penetration: s.penetration,
                exclusion: s.exclusion.map(|e| e.as_str().to_string()),
            }),
        )
    }

    /// Profiles rebuilt from `user_countries.csv`.
    fn load_profiles(&self, stage: &str) -> Result<Vec<UserProfile>, PipelineError> {
        let path = self.artifact(stage, Stage::Profile, files::USER_COUNTRIES)?;
        let rows: Vec<UserCountryRow> = read_rows(&path)?;
        type Seen = (BTreeMap<CountryCode, u64>, BTreeMap<CountryCode, i64>);
        let mut by_user: BTreeMap<String, Seen> = BTreeMap::new();
        for r in rows {
            let e = by_user.entry(r.user_id).or_default();
            e.0.insert(r.country.clone(), r.events);
            e.1.insert(r.country, r.first_seen);
        }
        by_user
            .into_iter()
            .map(|(u, (counts, seen))| {
                UserProfile::from_counts(u.clone(), counts, seen)
                    .ok_or_else(|| PipelineError::data(&path, format!("user {u} has no countries")))
            })
            .collect()
    }

    fn load_country_stats(&self, stage: &str) -> Result<Vec<CountryStatsRow>, PipelineError> {
        read_rows(&self.artifact(stage, Stage::Profile, files::COUNTRY_STATS)?)
    }

    fn metrics(&self) -> Result<(), PipelineError> {
        let input = self.artifact("metrics", Stage::Clean, files::CLEAN_EVENTS)?;
        let profiles = self.load_profiles("metrics")?;
        let trajectories = build_trajectories(self.read_event_artifact(&input)?);
        let gyration = user_gyration(&trajectories);
        write_rows(
            &self.out(files::GYRATION),
            gyration.iter().map(|(u, r)| GyrationRow { user_id: u.clone(), radius_km: *r }),
        )?;
        let mut disp = Vec::new();
        for (u, t) in &trajectories {
            for (i, km) in displacements(t).into_iter().enumerate() {
                disp.push(DisplacementRow { user_id: u.clone(), seq: i + 1, km });
            }
        }
        write_rows(&self.out(files::DISPLACEMENTS), disp)?;
        let mobility = mobility_profiles(&profiles, &gyration, self.config.metrics.gyration_average);
        write_rows(
            &self.out(files::MOBILITY),
            mobility.into_values().map(|m| MobilityRow {
                code: m.code,
                n_residents: m.n_residents,
                n_mobile: m.n_mobile,
                mobility_rate: m.mobility_rate,
                mean_radius_km: m.mean_radius_km,
                countries_visited: m.countries_visited,
            }),
        )?;
        let year = self.config.metrics.year;
        let (start, days) = year_bounds(year).expect("checked in config");
        let dates: Vec<String> = (0..days)
            .map(|d| {
                chrono::DateTime::from_timestamp(start + d as i64 * 86_400, 0)
                    .expect("in range")
                    .format("%Y-%m-%d")
                    .to_string()
            })
            .collect();
        for (dir, long, wide) in [
            (Direction::Outbound, files::DAILY_OUTBOUND, files::DAILY_OUTBOUND_WIDE),
            (Direction::Inbound, files::DAILY_INBOUND, files::DAILY_INBOUND_WIDE),
        ] {
            let series = daily_abroad_series(&profiles, &trajectories, year, dir);
            let mut rows = Vec::new();
            for s in series.values() {
                for (d, date) in dates.iter().enumerate() {
                    rows.push(DailyRow {
                        country: s.code.clone(),
                        day: d,
                        date: date.clone(),
                        count: s.values[d],
                        normalized: s.normalized[d],
                    });
                }
            }
            write_rows(&self.out(long), rows)?;
            if self.config.report.plot_tables {
                let cols: Vec<(CountryCode, Vec<f64>)> =
                    series.into_values().map(|s| (s.code, s.normalized)).collect();
                write_wide_daily(&self.out(wide), &dates, &cols)?;
            }
        }
        Ok(())
    }

    fn network(&self) -> Result<(), PipelineError> {
        let profiles = self.load_profiles("network")?;
        let stats_rows = self.load_country_stats("network")?;
        let stats: BTreeMap<CountryCode, crate::residence::CountryStats> = stats_rows
            .into_iter()
            .map(|r| {
                let s = crate::residence::CountryStats {
                    code: r.code.clone(),
                    residents: r.residents,
                    population: r.population,
                    gdp_per_capita: r.gdp_per_capita,
                    penetration: r.penetration,
                    exclusion: None,
                };
                (r.code, s)
            })
            .collect();
        let raw = build_flow_network(&profiles);
        write_rows(
            &self.out(files::EDGES_RAW),
            raw.edges.iter().map(|e| RawEdgeRow {
                origin: e.origin.clone(),
                destination: e.destination.clone(),
                raw_weight: e.raw_weight,
            }),
        )?;
        let c = &self.config.network;
        let filter =
            NetworkFilter { min_outgoing: c.min_outgoing, min_penetration: c.min_penetration, min_residents: c.min_residents };
        let net = normalize_and_filter(&raw, &stats, &filter)
            .map_err(|e| PipelineError::data(&self.out(files::COUNTRY_STATS), e))?;
        write_rows(&self.out(files::EDGES), net.edges.iter().map(edge_row))?;
        write_rows(
            &self.out(files::NODES),
            net.nodes.iter().map(|n| NodeRow {
                code: n.clone(),
                outgoing_population: net.outgoing_population.get(n).copied().unwrap_or(0),
                penetration: net.penetration[n],
            }),
        )?;
        write_rows(
            &self.out(files::BALANCE),
            inflow_outflow_balance(&net, c.weight).into_iter().map(|(code, b)| BalanceRow {
                code,
                inflow: b.inflow,
                outflow: b.outflow,
                balance: b.balance,
            }),
        )?;
        write_rows(
            &self.out(files::TOP_FLOWS),
            top_k_flows(&net, c.top_k, c.weight).into_iter().enumerate().map(|(i, e)| TopFlowRow {
                rank: i + 1,
                origin: e.origin,
                destination: e.destination,
                raw_weight: e.raw_weight,
                est_weight: e.est_weight,
            }),
        )
    }

    /// The filtered, normalized network from `nodes.csv` and `edges.csv`.
    pub fn load_network(&self, stage: &str) -> Result<FlowNetwork, PipelineError> {
        let nodes: Vec<NodeRow> = read_rows(&self.artifact(stage, Stage::Network, files::NODES)?)?;
        let edges: Vec<EdgeRow> = read_rows(&self.artifact(stage, Stage::Network, files::EDGES)?)?;
        Ok(FlowNetwork {
            nodes: nodes.iter().map(|n| n.code.clone()).collect(),
            outgoing_population: nodes.iter().map(|n| (n.code.clone(), n.outgoing_population)).collect(),
            penetration: nodes.iter().map(|n| (n.code.clone(), n.penetration)).collect(),
            edges: edges
                .into_iter()
                .map(|e| FlowEdge {
                    origin: e.origin,
                    destination: e.destination,
                    raw_weight: e.raw_weight,
                    est_weight: e.est_weight,
                })
                .collect(),
            normalized: true,
        })
    }

    fn communities(&self) -> Result<(), PipelineError> {
        let net = self.load_network("communities")?;
        let c = &self.config.communities;
        let graph = WeightedDigraph::from_flow_network(&net, c.weight, c.symmetrize);
        let cfg = OptimizerConfig { seed: self.config.seed, restarts: c.restarts };
        let code = |l: &String| -> CountryCode { l.parse().expect("labels are country codes") };
        // without any flow there is nothing to partition: one community, no Q
        if graph.total_weight() == 0.0 {
            let rows: Vec<(CountryCode, Vec<usize>)> =
                graph.labels().iter().map(|l| (code(l), vec![0; c.levels])).collect();
            write_communities(&self.out(files::COMMUNITIES), &rows, c.levels)?;
            return write_rows(&self.out(files::MODULARITY), Vec::<ModularityRow>::new());
        }
        let h = hierarchical_partition(&graph, c.levels, &cfg)
            .map_err(|e| PipelineError::data(&self.out(files::EDGES), e))?;
        let rows: Vec<(CountryCode, Vec<usize>)> =
            graph.labels().iter().enumerate().map(|(i, l)| (code(l), h.path(i))).collect();
        write_communities(&self.out(files::COMMUNITIES), &rows, c.levels)?;
        write_rows(
            &self.out(files::MODULARITY),
            h.levels.iter().enumerate().map(|(i, l)| ModularityRow {
                level: i + 1,
                q: l.partition.q,
                communities: l.partition.community_count(),
            }),
        )
    }

    /// Gravity fits in both weight modes; writes `gravity_fit.json`.
    pub fn fit_gravity(&self) -> Result<Option<GravityFits>, PipelineError> {
        self.prepare_output()?;
        let net = self.load_network("fit-gravity")?;
        let stats = self.load_country_stats("fit-gravity")?;
        let Some(cap_path) = &self.config.fit.capitals else {
            return Ok(None);
        };
        require_input(cap_path)?;
        let capitals = read_capitals(open(cap_path)?).map_err(|e| PipelineError::data(cap_path, e))?;
        let dist = capital_distances(&capitals);
        let residents: BTreeMap<CountryCode, f64> =
            stats.iter().filter(|s| s.residents > 0).map(|s| (s.code.clone(), s.residents as f64)).collect();
        let census: BTreeMap<CountryCode, f64> = stats
            .iter()
            .filter_map(|s| s.population.filter(|&p| p > 0).map(|p| (s.code.clone(), p as f64)))
            .collect();
        let min_d = self.config.fit.min_distance_km;
        let edges_path = self.out(files::EDGES);
        let raw = fit_gravity(&net, FlowWeight::Raw, &residents, &dist, min_d)
            .map_err(|e| PipelineError::data(&edges_path, format!("raw gravity fit: {e}")))?;
        let est = fit_gravity(&net, FlowWeight::Est, &census, &dist, min_d)
            .map_err(|e| PipelineError::data(&edges_path, format!("estimated gravity fit: {e}")))?;
        let fits = GravityFits { raw, est, min_distance_km: min_d };
        write_json(&self.out(files::GRAVITY_FIT), &fits)?;
        Ok(Some(fits))
    }

    /// Displacement and gyration power laws plus the penetration scaling;
    /// writes `powerlaw_fit.json`.
    pub fn fit_powerlaw(&self) -> Result<PowerLawFits, PipelineError> {
        self.prepare_output()?;
        let f = &self.config.fit;
        let dpath = self.artifact("fit-powerlaw", Stage::Metrics, files::DISPLACEMENTS)?;
        let gpath = self.artifact("fit-powerlaw", Stage::Metrics, files::GYRATION)?;
        let disp: Vec<f64> = read_rows::<DisplacementRow>(&dpath)?.into_iter().map(|r| r.km).collect();
        let gyr: Vec<f64> = read_rows::<GyrationRow>(&gpath)?.into_iter().map(|r| r.radius_km).collect();
        let dist_fit = |xs: &[f64], xmin: f64, xmax: Option<f64>| -> Result<DistributionFit, crate::models::ModelError> {
            Ok(DistributionFit {
                mle: fit_power_law(xs, xmin)?,
                truncated: xmax.map(|m| fit_power_law_truncated(xs, xmin, m)).transpose()?,
                log_binned: log_binned_fit(xs, xmin).ok(),
            })
        };
        let displacement = dist_fit(&disp, f.displacement_xmin_km, f.displacement_xmax_km)
            .map_err(|e| PipelineError::data(&dpath, format!("displacement power law: {e}")))?;
        let (gyration, gyration_error) = match dist_fit(&gyr, f.gyration_xmin_km, f.gyration_xmax_km) {
            Ok(g) => (Some(g), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let stats = self.load_country_stats("fit-powerlaw")?;
        let (gdp, pen): (Vec<f64>, Vec<f64>) = stats
            .iter()
            .filter(|s| s.included && s.penetration > 0.0)
            .filter_map(|s| s.gdp_per_capita.map(|g| (g, s.penetration)))
            .unzip();
        let (penetration_vs_gdp, penetration_vs_gdp_error) = match loglog_regression(&gdp, &pen) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let fits = PowerLawFits { displacement, gyration, gyration_error, penetration_vs_gdp, penetration_vs_gdp_error };
        write_json(&self.out(files::POWERLAW_FIT), &fits)?;
        Ok(fits)
    }

    /// Power laws must succeed; a gravity fit that the data cannot support
    /// (too few nonzero pairs, say) is recorded instead of aborting the run.
    fn fit(&self) -> Result<(), PipelineError> {
        let powerlaw = self.fit_powerlaw()?;
        let (gravity, gravity_error) = match self.fit_gravity() {
            Ok(g) => (g, None),
            Err(PipelineError::Data { reason, .. }) => {
                let _ = std::fs::remove_file(self.out(files::GRAVITY_FIT));
                (None, Some(reason))
            }
            Err(e) => return Err(e),
        };
        write_json(&self.out(files::FITS), &Fits { gravity, gravity_error, powerlaw })
    }

    /// Correlates estimated inbound flows with the reference statistics;
    /// writes `validation.json`.
    pub fn validate(&self, reference: Option<&Path>) -> Result<Value, PipelineError> {
        self.prepare_output()?;
        let path = reference
            .map(Path::to_path_buf)
            .or_else(|| self.config.report.reference.clone())
            .ok_or_else(|| PipelineError::MissingInput(PathBuf::from("report.reference")))?;
        require_input(&path)?;
        let table = read_reference(open(&path)?).map_err(|e| PipelineError::data(&path, e))?;
        let balance: Vec<BalanceRow> = read_rows(&self.artifact("validate", Stage::Network, files::BALANCE)?)?;
        let inflow: BTreeMap<CountryCode, f64> = balance.into_iter().map(|b| (b.code, b.inflow)).collect();
        let arrivals: BTreeMap<CountryCode, f64> =
            table.iter().map(|(c, r)| (c.clone(), r.arrivals_thousands)).collect();
        let receipts: BTreeMap<CountryCode, f64> = table.iter().map(|(c, r)| (c.clone(), r.receipts_musd)).collect();
        let a = validate_external(&inflow, &arrivals).map_err(|e| PipelineError::data(&path, e))?;
        let r = validate_external(&inflow, &receipts).map_err(|e| PipelineError::data(&path, e))?;
        let v = json!({ "estimate": "inflow from balance.csv", "arrivals": a, "receipts": r });
        write_json(&self.out(files::VALIDATION), &v)?;
        Ok(v)
    }

    /// Aggregate summary of whatever artifacts exist; every figure names its
    /// source file. Writes `report.json`.
    pub fn report(&self) -> Result<Value, PipelineError> {
        let stats = self.load_country_stats("report")?;
        let mut r = serde_json::Map::new();
        let cite = |file: &str, value: Value| json!({ "file": file, "value": value });

        if let Ok(p) = self.artifact("report", Stage::Ingest, files::INGEST_ERRORS) {
            r.insert("ingest_errors".into(), cite(files::INGEST_ERRORS, read_rows::<IngestErrorRow>(&p)?.len().into()));
        }
        if let Ok(p) = self.artifact("report", Stage::Clean, files::CLEANING_REPORT) {
            let c: CleaningReport = read_json(&p)?;
            r.insert(
                "cleaning".into(),
                json!({
                    "speed_removed": cite(files::CLEANING_REPORT, c.speed_removed.into()),
                    "user_retention": cite(files::CLEANING_REPORT, c.user_retention.into()),
                    "event_retention": cite(files::CLEANING_REPORT, c.event_retention.into()),
                }),
            );
        }
        let profiles: Vec<ProfileRow> = read_rows(&self.artifact("report", Stage::Profile, files::PROFILES)?)?;
        let included = stats.iter().filter(|s| s.included).count();
        r.insert(
            "residence".into(),
            json!({
                "users": cite(files::PROFILES, profiles.len().into()),
                "mobile_users": cite(files::PROFILES, profiles.iter().filter(|p| p.mobile).count().into()),
                "countries": cite(files::COUNTRY_STATS, stats.len().into()),
                "countries_included": cite(files::COUNTRY_STATS, included.into()),
            }),
        );
        if let Ok(p) = self.artifact("report", Stage::Network, files::BALANCE) {
            let bal: Vec<BalanceRow> = read_rows(&p)?;
            let edges: Vec<EdgeRow> = read_rows(&self.out(files::EDGES))?;
            let total = exact_sum(edges.iter().map(|e| match self.config.network.weight {
                FlowWeight::Raw => e.raw_weight as f64,
                FlowWeight::Est => e.est_weight,
            }));
            r.insert(
                "network".into(),
                json!({
                    "nodes": cite(files::BALANCE, bal.len().into()),
                    "edges": cite(files::EDGES, edges.len().into()),
                    "total_flow": cite(files::EDGES, total.into()),
                    "balance_sum": cite(files::BALANCE, exact_sum(bal.iter().map(|b| b.balance)).into()),
                }),
            );
        }
        if let Ok(p) = self.artifact("report", Stage::Communities, files::MODULARITY) {
            let m: Vec<ModularityRow> = read_rows(&p)?;
            let levels: Vec<Value> =
                m.iter().map(|l| json!({ "level": l.level, "q": l.q, "communities": l.communities })).collect();
            r.insert("communities".into(), cite(files::MODULARITY, levels.into()));
        }
        if let Ok(p) = self.artifact("report", Stage::Fit, files::FITS) {
            let f: Fits = read_json(&p)?;
            let mut fits = serde_json::Map::new();
            fits.insert("displacement_exponent".into(), cite(files::FITS, f.powerlaw.displacement.mle.exponent.into()));
            if let Some(t) = &f.powerlaw.displacement.truncated {
                fits.insert("displacement_exponent_truncated".into(), cite(files::FITS, t.exponent.into()));
            }
            if let Some(g) = &f.powerlaw.gyration {
                fits.insert("gyration_exponent".into(), cite(files::FITS, g.mle.exponent.into()));
            }
            if let Some(e) = &f.gravity_error {
                fits.insert("gravity_error".into(), cite(files::FITS, e.as_str().into()));
            }
            if let Some(g) = &f.gravity {
                for (name, fit) in [("gravity_raw", &g.raw), ("gravity_est", &g.est)] {
                    fits.insert(
                        name.into(),
                        cite(
                            files::FITS,
                            json!({ "alpha": fit.alpha, "beta": fit.beta, "gamma": fit.gamma, "r2": fit.r2, "n_pairs": fit.n_pairs }),
                        ),
                    );
                }
            }
            r.insert("fits".into(), Value::Object(fits));
        }
        if let Some(dir) = &self.config.report.truth_dir {
            r.insert("truth".into(), self.truth_comparison(dir, &profiles)?);
        }
        let report = Value::Object(r);
        write_json(&self.out(files::REPORT), &report)?;
        Ok(report)
    }

    fn truth_comparison(&self, dir: &Path, profiles: &[ProfileRow]) -> Result<Value, PipelineError> {
        let res_path = dir.join("residences.csv");
        require_input(&res_path)?;
        let truth: Vec<TruthResidenceRow> = read_rows(&res_path)?;
        let found: BTreeMap<&str, &CountryCode> = profiles.iter().map(|p| (p.user_id.as_str(), &p.residence)).collect();
        let recovered = truth.iter().filter(|t| found.get(t.user_id.as_str()) == Some(&&t.country)).count();
        let share = if truth.is_empty() { 1.0 } else { recovered as f64 / truth.len() as f64 };
        let mut out = json!({
            "residence_recovery": { "files": [files::PROFILES, "residences.csv"], "value": share },
            "planted_users": truth.len(),
        });
        let mob_path = dir.join("mobility.csv");
        if mob_path.is_file() {
            let planted: Vec<TruthMobilityRow> = read_rows(&mob_path)?;
            let measured: BTreeMap<CountryCode, MobilityRow> = read_rows::<MobilityRow>(
                &self.artifact("report", Stage::Metrics, files::MOBILITY)?,
            )?
            .into_iter()
            .map(|m| (m.code.clone(), m))
            .collect();
            let mut worst: f64 = 0.0;
            let mut rows = Vec::new();
            for p in planted {
                let Some(m) = measured.get(&p.country) else { continue };
                let z = mobility_z(m.mobility_rate, p.planted_rate, m.n_residents);
                worst = worst.max(z.abs());
                rows.push(json!({ "country": p.country, "planted": p.planted_rate, "measured": m.mobility_rate, "z": z }));
            }
            out["mobility"] = json!({ "files": [files::MOBILITY, "mobility.csv"], "max_abs_z": worst, "countries": rows });
        }
        Ok(out)
    }
}

/// Writes `geoflow.json` with desk-scale settings into a synthetic
/// directory so that `geoflow run --config <dir>/geoflow.json` works as is.
pub fn write_desk_config(dir: &Path, year: i32) -> Result<PathBuf, PipelineError> {
    let mut cfg = Config::desk_scale();
    cfg.metrics.year = year;
    let path = dir.join("geoflow.json");
    write_json(&path, &cfg)?;
    Ok(path)
}

/// Standardized deviation of a measured rate from a binomial expectation;
/// zero when both agree exactly and infinite when the variance is zero but
/// they differ.
pub fn mobility_z(measured: f64, planted: f64, n: u64) -> f64 {
    let sd = (planted * (1.0 - planted) / n.max(1) as f64).sqrt();
    let d = measured - planted;
    if d == 0.0 {
        0.0
    } else if sd == 0.0 {
        f64::INFINITY
    } else {
        d / sd
    }
}

fn edge_row(e: &FlowEdge) -> EdgeRow {
    EdgeRow {
        origin: e.origin.clone(),
        destination: e.destination.clone(),
        raw_weight: e.raw_weight,
        est_weight: e.est_weight,
    }
}

/// Lists artifact files of a finished run, sorted, for comparison across runs.
pub fn artifact_listing(dir: &Path) -> std::io::Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            out.push((entry.file_name().to_string_lossy().into_owned(), std::fs::read(entry.path())?));
        }
    }
    out.sort();
    Ok(out)
}

