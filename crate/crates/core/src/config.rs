//! Pipeline configuration: one JSON file with a section per stage.
//!
//! Every threshold has a named key. Missing keys take their defaults;
//! unknown keys are rejected. Environment variables of the form
//! `GEOFLOW_<SECTION>__<KEY>` (or `GEOFLOW_<KEY>` for top-level keys)
//! override file values; the value is parsed as JSON and falls back to a
//! plain string.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::clean::{PopularityWeight, DEFAULT_COVERAGE, DEFAULT_MAX_SPEED_KMH};
use crate::community::{DEFAULT_MAX_LEVELS, DEFAULT_RESTARTS};
use crate::ingest::HeaderMode;
use crate::metrics::GyrationAverage;
use crate::models::{DEFAULT_DISPLACEMENT_XMIN_KM, DEFAULT_MIN_DISTANCE_KM};
use crate::network::{FlowWeight, DEFAULT_MIN_OUTGOING, DEFAULT_TOP_K};
use crate::residence::{DEFAULT_MIN_PENETRATION, DEFAULT_MIN_RESIDENTS};

pub const ENV_PREFIX: &str = "GEOFLOW_";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Parse(String),
    #[error("environment override {var}: {reason}")]
    Env { var: String, reason: String },
    #[error("config key {key}: {reason}")]
    Invalid { key: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Seeds every random choice of the run.
    pub seed: u64,
    /// Worker threads; 0 uses all cores. Output does not depend on it.
    pub workers: usize,
    /// Directory for all artifacts.
    pub output_dir: PathBuf,
    pub ingest: IngestConfig,
    pub clean: CleanConfig,
    pub residence: ResidenceConfig,
    pub metrics: MetricsConfig,
    pub network: NetworkConfig,
    pub communities: CommunityConfig,
    pub fit: FitConfig,
    pub report: ReportConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 42,
            workers: 0,
            output_dir: PathBuf::from("out"),
            ingest: IngestConfig::default(),
            clean: CleanConfig::default(),
            residence: ResidenceConfig::default(),
            metrics: MetricsConfig::default(),
            network: NetworkConfig::default(),
            communities: CommunityConfig::default(),
            fit: FitConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub events: PathBuf,
    /// GeoJSON country polygons; events already carrying a country keep it.
    pub boundaries: Option<PathBuf>,
    pub delimiter: char,
    pub header: HeaderMode,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { events: PathBuf::from("events.csv"), boundaries: None, delimiter: ',', header: HeaderMode::Auto }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanConfig {
    pub max_speed_kmh: f64,
    pub coverage: f64,
    pub popularity_weight: PopularityWeight,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self { max_speed_kmh: DEFAULT_MAX_SPEED_KMH, coverage: DEFAULT_COVERAGE, popularity_weight: PopularityWeight::Users }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidenceConfig {
    /// `code,population[,gdp_per_capita]`.
    pub census: PathBuf,
    pub min_penetration: f64,
    pub min_residents: u64,
}

impl Default for ResidenceConfig {
    fn default() -> Self {
        Self {
            census: PathBuf::from("census.csv"),
            min_penetration: DEFAULT_MIN_PENETRATION,
            min_residents: DEFAULT_MIN_RESIDENTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Calendar year (UTC) covered by the daily series.
    pub year: i32,
    pub gyration_average: GyrationAverage,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { year: 2012, gyration_average: GyrationAverage::AllResidents }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub min_outgoing: u64,
    pub min_penetration: f64,
    pub min_residents: u64,
    pub top_k: usize,
    pub weight: FlowWeight,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            min_outgoing: DEFAULT_MIN_OUTGOING,
            min_penetration: DEFAULT_MIN_PENETRATION,
            min_residents: 0,
            top_k: DEFAULT_TOP_K,
            weight: FlowWeight::Est,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommunityConfig {
    pub levels: usize,
    pub restarts: usize,
    pub weight: FlowWeight,
    /// Use `w(i,j) + w(j,i)` on both directions instead of the directed network.
    pub symmetrize: bool,
}

impl Default for CommunityConfig {
    fn default() -> Self {
        Self { levels: DEFAULT_MAX_LEVELS, restarts: DEFAULT_RESTARTS, weight: FlowWeight::Est, symmetrize: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// `code,lat,lon`; the gravity fit is skipped without it.
    pub capitals: Option<PathBuf>,
    pub min_distance_km: f64,
    pub displacement_xmin_km: f64,
    /// When set, a truncated-power-law estimate is reported as well.
    pub displacement_xmax_km: Option<f64>,
    pub gyration_xmin_km: f64,
    pub gyration_xmax_km: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            capitals: Some(PathBuf::from("capitals.csv")),
            min_distance_km: DEFAULT_MIN_DISTANCE_KM,
            displacement_xmin_km: DEFAULT_DISPLACEMENT_XMIN_KM,
            displacement_xmax_km: None,
            gyration_xmin_km: DEFAULT_DISPLACEMENT_XMIN_KM,
            gyration_xmax_km: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// `code,arrivals_thousands,receipts_musd` for external validation.
    pub reference: Option<PathBuf>,
    /// Directory with synthetic truth files (`residences.csv`, `mobility.csv`).
    pub truth_dir: Option<PathBuf>,
    /// Also write wide per-day tables for plotting.
    pub plot_tables: bool,
}

impl Config {
    /// Settings for a synthetic directory as written by the generator:
    /// inputs and truth beside the config, thresholds scaled to a few
    /// thousand users instead of millions.
    pub fn desk_scale() -> Self {
        let mut c = Self::default();
        c.residence.min_penetration = 0.0;
        c.residence.min_residents = 5;
        c.network.min_outgoing = 1;
        c.network.min_penetration = 0.0;
        c.report.truth_dir = Some(PathBuf::from("."));
        c
    }

    /// Reads `path`, applies overrides from `env`, and resolves relative
    /// paths against the config file's directory.
    pub fn load(path: &Path, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_json_str(&text, env)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    /// Parses JSON text with overrides; paths are left as written.
    pub fn from_json_str(text: &str, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if !value.is_object() {
            return Err(ConfigError::Parse("top level must be an object".into()));
        }
        let mut env: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        env.sort();
        for (var, raw) in env {
            apply_override(&mut value, &var, &raw)?;
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.ingest.events);
        if let Some(p) = self.ingest.boundaries.as_mut() {
            fix(p);
        }
        fix(&mut self.residence.census);
        for p in [&mut self.fit.capitals, &mut self.report.reference, &mut self.report.truth_dir].into_iter().flatten() {
            fix(p);
        }
    }

    fn check(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: &str| Err(ConfigError::Invalid { key: key.into(), reason: reason.into() });
        if !(self.clean.max_speed_kmh > 0.0) {
            return bad("clean.max_speed_kmh", "must be positive");
        }
        if !(self.clean.coverage > 0.0 && self.clean.coverage <= 1.0) {
            return bad("clean.coverage", "must lie in (0, 1]");
        }
        if !(self.residence.min_penetration >= 0.0) || !(self.network.min_penetration >= 0.0) {
            return bad("min_penetration", "must be non-negative");
        }
        if self.communities.levels == 0 {
            return bad("communities.levels", "must be at least 1");
        }
        if self.communities.restarts == 0 {
            return bad("communities.restarts", "must be at least 1");
        }
        if !(self.fit.displacement_xmin_km > 0.0) || !(self.fit.gyration_xmin_km > 0.0) {
            return bad("fit.*_xmin_km", "must be positive");
        }
        if crate::metrics::year_bounds(self.metrics.year).is_none() {
            return bad("metrics.year", "out of range");
        }
        if !self.ingest.delimiter.is_ascii() {
            return bad("ingest.delimiter", "must be a single ASCII character");
        }
        Ok(())
    }
}

fn apply_override(root: &mut Value, var: &str, raw: &str) -> Result<(), ConfigError> {
    let key = var[ENV_PREFIX.len()..].to_ascii_lowercase();
    let parts: Vec<&str> = key.split("__").collect();
    if parts.iter().any(|p| p.is_empty()) || parts.len() > 2 {
        return Err(ConfigError::Env { var: var.into(), reason: "expected GEOFLOW_KEY or GEOFLOW_SECTION__KEY".into() });
    }
    let parsed = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.into()));
    let mut node = root;
    for p in &parts[..parts.len() - 1] {
        let obj = node.as_object_mut().expect("checked object");
        node = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Default::default()));
        if !node.is_object() {
            return Err(ConfigError::Env { var: var.into(), reason: format!("{p} is not a section") });
        }
    }
    node.as_object_mut().expect("checked object").insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}
