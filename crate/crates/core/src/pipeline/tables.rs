//! Row types of the flat artifact files and their readers and writers.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::country::CountryCode;

/// A row type with a fixed header, so empty tables still carry one.
pub trait Row: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
}

pub fn write_rows<R: Row>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<(), PipelineError> {
    let io = |e: csv::Error| PipelineError::io(path, std::io::Error::other(e));
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(io)?;
    w.write_record(R::HEADER).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

pub fn read_rows<R: Row>(path: &Path) -> Result<Vec<R>, PipelineError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| PipelineError::io(path, std::io::Error::other(e)))?;
    let header = rdr.headers().map_err(|e| PipelineError::data(path, e))?.clone();
    if header.iter().ne(R::HEADER.iter().copied()) {
        return Err(PipelineError::data(path, format!("expected header {}", R::HEADER.join(","))));
    }
    rdr.deserialize().collect::<Result<Vec<R>, _>>().map_err(|e| PipelineError::data(path, e))
}

macro_rules! row {
    ($(#[$m:meta])* $name:ident { $($field:ident : $ty:ty),* $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        pub struct $name { $(pub $field: $ty),* }
        impl Row for $name {
            const HEADER: &'static [&'static str] = &[$(stringify!($field)),*];
        }
    };
}

row!(IngestErrorRow { line: u64, reason: String });
row!(SourceRankRow { country: CountryCode, rank: usize, source: String, users: u64, events: u64, retained: bool });
row!(
    /// Per user and visited country: event count and first event time.
    UserCountryRow { user_id: String, country: CountryCode, events: u64, first_seen: i64 }
);
row!(ProfileRow { user_id: String, residence: CountryCode, total_events: u64, distinct_countries: usize, mobile: bool });
row!(CountryStatsRow {
    code: CountryCode,
    residents: u64,
    population: Option<i64>,
    gdp_per_capita: Option<f64>,
    penetration: f64,
    included: bool,
    exclusion: Option<String>,
});
row!(MobilityRow {
    code: CountryCode,
    n_residents: u64,
    n_mobile: u64,
    mobility_rate: f64,
    mean_radius_km: f64,
    countries_visited: usize,
});
row!(GyrationRow { user_id: String, radius_km: f64 });
row!(DisplacementRow { user_id: String, seq: usize, km: f64 });
row!(DailyRow { country: CountryCode, day: usize, date: String, count: u64, normalized: f64 });
row!(RawEdgeRow { origin: CountryCode, destination: CountryCode, raw_weight: u64 });
row!(EdgeRow { origin: CountryCode, destination: CountryCode, raw_weight: u64, est_weight: f64 });
row!(NodeRow { code: CountryCode, outgoing_population: u64, penetration: f64 });
row!(BalanceRow { code: CountryCode, inflow: f64, outflow: f64, balance: f64 });
row!(TopFlowRow { rank: usize, origin: CountryCode, destination: CountryCode, raw_weight: u64, est_weight: f64 });
row!(ModularityRow { level: usize, q: f64, communities: usize });
row!(TruthResidenceRow { user_id: String, country: CountryCode });
row!(TruthMobilityRow { country: CountryCode, residents: usize, planted_rate: f64 });

/// Community of each country at every level; written with one column per level.
pub fn write_communities(path: &Path, rows: &[(CountryCode, Vec<usize>)], levels: usize) -> Result<(), PipelineError> {
    let io = |e: csv::Error| PipelineError::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header = vec!["country".to_string()];
    header.extend((1..=levels).map(|l| format!("level{l}")));
    w.write_record(&header).map_err(io)?;
    for (code, path_) in rows {
        let mut rec = vec![code.to_string()];
        rec.extend(path_.iter().map(|c| c.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

/// Wide table: one row per day, one column per country.
pub fn write_wide_daily(path: &Path, dates: &[String], series: &[(CountryCode, Vec<f64>)]) -> Result<(), PipelineError> {
    let io = |e: csv::Error| PipelineError::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header = vec!["date".to_string()];
    header.extend(series.iter().map(|(c, _)| c.to_string()));
    w.write_record(&header).map_err(io)?;
    for (d, date) in dates.iter().enumerate() {
        let mut rec = vec![date.clone()];
        rec.extend(series.iter().map(|(_, v)| v[d].to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes") + "\n";
    std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::data(path, e))
}
