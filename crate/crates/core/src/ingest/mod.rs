//! Event parsing, country labelling and per-user trajectories.
//!
//! The event file is one record per line:
//!
//! ```text
//! user_id,timestamp,lat,lon,source[,country]
//! ```
//!
//! `timestamp` is integer UTC seconds. A header line is optional; in
//! [`HeaderMode::Auto`] the first record is treated as a header when its
//! second field is not an integer. Malformed lines are skipped and reported
//! with their line number in [`ParseReport::errors`].

mod boundary;
mod trajectory;

use std::io::{BufRead, BufReader, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::country::CountryCode;
use crate::geo::LatLon;

pub use boundary::{
    classify_polygon, classify_ring, BoundaryError, BoundaryIndex, CountryBoundary, Location, Polygon, Ring,
};
pub use trajectory::{build_trajectories, Trajectory};

/// Characters that may not appear in user ids or source names, so that any
/// supported delimiter round-trips without quoting.
pub const RESERVED: [char; 5] = [',', ';', '\t', '|', '"'];

/// One geo-located message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoEvent {
    pub user_id: String,
    /// UTC seconds since the epoch.
    pub timestamp: i64,
    pub position: LatLon,
    /// Client application that posted the message.
    pub source: String,
    pub country: Option<CountryCode>,
}

impl GeoEvent {
    /// Builds an event, validating and normalizing the coordinates.
    pub fn new(
        user_id: impl Into<String>,
        timestamp: i64,
        lat: f64,
        lon: f64,
        source: impl Into<String>,
        country: Option<CountryCode>,
    ) -> Result<Self, String> {
        let user_id = user_id.into();
        let source = source.into();
        if user_id.is_empty() {
            return Err("empty user_id".into());
        }
        for (name, v) in [("user_id", &user_id), ("source", &source)] {
            if let Some(c) = v.chars().find(|&c| RESERVED.contains(&c) || c.is_control()) {
                return Err(format!("{name} contains reserved character {c:?}"));
            }
        }
        if timestamp < 0 {
            return Err(format!("negative timestamp {timestamp}"));
        }
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(format!("latitude {lat} out of range [-90, 90]"));
        }
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(format!("longitude {lon} out of range [-180, 180]"));
        }
        let lon = if lon == -180.0 { 180.0 } else { lon };
        Ok(Self { user_id, timestamp, position: LatLon::new(lat, lon), source, country })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeaderMode {
    #[default]
    Auto,
    Present,
    Absent,
}

/// How an event stream is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventFormat {
    pub delimiter: u8,
    pub header: HeaderMode,
}

impl Default for EventFormat {
    fn default() -> Self {
        Self { delimiter: b',', header: HeaderMode::Auto }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub events: Vec<GeoEvent>,
    pub errors: Vec<LineError>,
    pub header_skipped: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("unreadable event stream: {0}")]
    Io(#[from] std::io::Error),
}

/// Parses a line-delimited event stream.
///
/// An unreadable stream is fatal; individual bad lines are collected into
/// the report and skipped. Blank lines are ignored but still counted.
pub fn parse_events<R: Read>(reader: R, format: &EventFormat) -> Result<ParseReport, IngestError> {
    let mut rdr = BufReader::new(reader);
    let mut report = ParseReport::default();
    let mut first = true;
    let mut buf = Vec::new();
    let mut line = 0u64;
    loop {
        buf.clear();
        if rdr.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line += 1;
        while matches!(buf.last(), Some(b'\n' | b'\r')) {
            buf.pop();
        }
        if buf.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let text = match std::str::from_utf8(&buf) {
            Ok(t) => t,
            Err(_) => {
                report.errors.push(LineError { line, reason: "line is not UTF-8".into() });
                first = false;
                continue;
            }
        };
        let fields: Vec<&str> = text.split(format.delimiter as char).map(unquote).collect();
        if first {
            first = false;
            let is_header = match format.header {
                HeaderMode::Present => true,
                HeaderMode::Absent => false,
                HeaderMode::Auto => fields.get(1).map_or(true, |f| f.parse::<i64>().is_err()),
            };
            if is_header {
                report.header_skipped = true;
                continue;
            }
        }
        match parse_fields(&fields) {
            Ok(ev) => report.events.push(ev),
            Err(reason) => report.errors.push(LineError { line, reason }),
        }
    }
    Ok(report)
}

fn unquote(f: &str) -> &str {
    let f = f.trim();
    f.strip_prefix('"').and_then(|g| g.strip_suffix('"')).unwrap_or(f)
}

fn parse_fields(fields: &[&str]) -> Result<GeoEvent, String> {
    if fields.len() != 5 && fields.len() != 6 {
        return Err(format!("expected 5 or 6 fields, found {}", fields.len()));
    }
    let timestamp = fields[1].parse::<i64>().map_err(|_| format!("bad timestamp {:?}", fields[1]))?;
    let lat = fields[2].parse::<f64>().map_err(|_| format!("bad latitude {:?}", fields[2]))?;
    let lon = fields[3].parse::<f64>().map_err(|_| format!("bad longitude {:?}", fields[3]))?;
    let country = match fields.get(5) {
        Some(c) if !c.is_empty() => Some(c.parse::<CountryCode>().map_err(|e| e.to_string())?),
        _ => None,
    };
    GeoEvent::new(fields[0], timestamp, lat, lon, fields[4], country)
}

/// Writes events in the ingest line format (no header, country column always present).
pub fn write_events<W: Write>(writer: W, events: &[GeoEvent]) -> Result<(), IngestError> {
    let mut w = std::io::BufWriter::new(writer);
    for e in events {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            e.user_id,
            e.timestamp,
            e.position.lat,
            e.position.lon,
            e.source,
            e.country.as_ref().map_or("", |c| c.as_str())
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Assigns a country to every unlabeled event. Pre-labeled events keep their label.
pub fn assign_countries(events: &mut [GeoEvent], index: &BoundaryIndex) {
    events.par_iter_mut().filter(|e| e.country.is_none()).for_each(|e| {
        e.country = index.locate(e.position);
    });
}
