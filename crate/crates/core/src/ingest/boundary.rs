//! Country polygons and point lookup.
//!
//! Boundaries are read from a GeoJSON `FeatureCollection` whose features
//! carry a string property `code` and a `Polygon` or `MultiPolygon`
//! geometry in (lon, lat) order. Rings must be closed, have at least four
//! vertices, and must not cross the antimeridian: features spanning ±180°
//! have to be split by the supplier.
//!
//! A point on an edge or vertex is inside. When several countries claim a
//! point the lexicographically smallest code wins.

use std::collections::BTreeSet;
use std::io::Read;

use serde::Deserialize;

use crate::country::CountryCode;
use crate::geo::LatLon;

#[derive(Debug, thiserror::Error)]
pub enum BoundaryError {
    #[error("boundary file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("feature {index}: missing string property `code`")]
    MissingCode { index: usize },
    #[error("feature {index}: {source}")]
    BadCode { index: usize, source: crate::country::InvalidCountryCode },
    #[error("duplicate country code {0}")]
    DuplicateCode(CountryCode),
    #[error("{code}: ring with {vertices} vertices (need >= 4)")]
    ShortRing { code: CountryCode, vertices: usize },
    #[error("{code}: ring is not closed")]
    OpenRing { code: CountryCode },
    #[error("{code}: ring crosses the antimeridian (consecutive vertices {from} -> {to} in longitude); split it first")]
    Antimeridian { code: CountryCode, from: f64, to: f64 },
    #[error("{code}: non-finite coordinate")]
    NonFinite { code: CountryCode },
}

/// A closed ring of (lon, lat) vertices; the first vertex is repeated at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Ring(pub Vec<(f64, f64)>);

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub exterior: Ring,
    pub holes: Vec<Ring>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountryBoundary {
    pub code: CountryCode,
    pub polygons: Vec<Polygon>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Outside,
    Boundary,
    Inside,
}

/// Even-odd classification of `(x, y)` against one ring, with exact
/// detection of points lying on an edge.
pub fn classify_ring(ring: &Ring, x: f64, y: f64) -> Location {
    let v = &ring.0;
    let mut inside = false;
    for w in v.windows(2) {
        let ((xi, yi), (xj, yj)) = (w[0], w[1]);
        let cross = (xj - xi) * (y - yi) - (yj - yi) * (x - xi);
        if cross == 0.0 && x >= xi.min(xj) && x <= xi.max(xj) && y >= yi.min(yj) && y <= yi.max(yj) {
            return Location::Boundary;
        }
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
    }
    if inside {
        Location::Inside
    } else {
        Location::Outside
    }
}

/// Classification against a polygon with holes. Hole edges count as boundary.
pub fn classify_polygon(poly: &Polygon, x: f64, y: f64) -> Location {
    match classify_ring(&poly.exterior, x, y) {
        Location::Outside => Location::Outside,
        Location::Boundary => Location::Boundary,
        Location::Inside => {
            for h in &poly.holes {
                match classify_ring(h, x, y) {
                    Location::Inside => return Location::Outside,
                    Location::Boundary => return Location::Boundary,
                    Location::Outside => {}
                }
            }
            Location::Inside
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct BBox {
    min_x: f64,
    min_y: f64,
    max_x: f64,
    max_y: f64,
}

impl BBox {
    fn of(ring: &Ring) -> Self {
        let mut b = BBox { min_x: f64::INFINITY, min_y: f64::INFINITY, max_x: f64::NEG_INFINITY, max_y: f64::NEG_INFINITY };
        for &(x, y) in &ring.0 {
            b.min_x = b.min_x.min(x);
            b.min_y = b.min_y.min(y);
            b.max_x = b.max_x.max(x);
            b.max_y = b.max_y.max(y);
        }
        b
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

#[derive(Debug, Clone)]
struct Entry {
    code: CountryCode,
    bbox: BBox,
    polygon: Polygon,
}

/// Validated boundary set prepared for point lookup.
///
/// Polygons are kept sorted by code so the first hit is the smallest code.
#[derive(Debug, Clone, Default)]
pub struct BoundaryIndex {
    entries: Vec<Entry>,
    codes: Vec<CountryCode>,
}

impl BoundaryIndex {
    pub fn new(boundaries: Vec<CountryBoundary>) -> Result<Self, BoundaryError> {
        let mut seen = BTreeSet::new();
        let mut entries = Vec::new();
        for b in boundaries {
            if !seen.insert(b.code.clone()) {
                return Err(BoundaryError::DuplicateCode(b.code));
            }
            for p in b.polygons {
                validate_ring(&b.code, &p.exterior)?;
                for h in &p.holes {
                    validate_ring(&b.code, h)?;
                }
                entries.push(Entry { code: b.code.clone(), bbox: BBox::of(&p.exterior), polygon: p });
            }
        }
        entries.sort_by(|a, b| a.code.cmp(&b.code));
        Ok(Self { entries, codes: seen.into_iter().collect() })
    }

    /// Reads a GeoJSON feature collection.
    pub fn from_geojson<R: Read>(reader: R) -> Result<Self, BoundaryError> {
        let fc: FeatureCollection = serde_json::from_reader(reader)?;
        let mut out = Vec::with_capacity(fc.features.len());
        for (index, f) in fc.features.into_iter().enumerate() {
            let code = f
                .properties
                .get("code")
                .and_then(|v| v.as_str())
                .ok_or(BoundaryError::MissingCode { index })?
                .parse::<CountryCode>()
                .map_err(|source| BoundaryError::BadCode { index, source })?;
            let polygons = match f.geometry {
                Geometry::Polygon { coordinates } => vec![to_polygon(coordinates)],
                Geometry::MultiPolygon { coordinates } => coordinates.into_iter().map(to_polygon).collect(),
            };
            out.push(CountryBoundary { code, polygons });
        }
        Self::new(out)
    }

    pub fn codes(&self) -> &[CountryCode] {
        &self.codes
    }

    /// Country whose closed polygon contains the point; `None` for open sea.
    pub fn locate(&self, p: LatLon) -> Option<CountryCode> {
        let (x, y) = (p.lon, p.lat);
        self.entries
            .iter()
            .find(|e| e.bbox.contains(x, y) && classify_polygon(&e.polygon, x, y) != Location::Outside)
            .map(|e| e.code.clone())
    }
}

fn validate_ring(code: &CountryCode, ring: &Ring) -> Result<(), BoundaryError> {
    let v = &ring.0;
    if v.len() < 4 {
        return Err(BoundaryError::ShortRing { code: code.clone(), vertices: v.len() });
    }
    if v.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(BoundaryError::NonFinite { code: code.clone() });
    }
    if v.first() != v.last() {
        return Err(BoundaryError::OpenRing { code: code.clone() });
    }
    for w in v.windows(2) {
        if (w[1].0 - w[0].0).abs() > 180.0 {
            return Err(BoundaryError::Antimeridian { code: code.clone(), from: w[0].0, to: w[1].0 });
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct FeatureCollection {
    features: Vec<Feature>,
}

#[derive(Deserialize)]
struct Feature {
    #[serde(default)]
    properties: serde_json::Map<String, serde_json::Value>,
    geometry: Geometry,
}

#[derive(Deserialize)]
#[serde(tag = "type")]
enum Geometry {
    Polygon { coordinates: Vec<Vec<Vec<f64>>> },
    MultiPolygon { coordinates: Vec<Vec<Vec<Vec<f64>>>> },
}

fn to_ring(coords: Vec<Vec<f64>>) -> Ring {
    Ring(coords.into_iter().map(|c| (c.first().copied().unwrap_or(f64::NAN), c.get(1).copied().unwrap_or(f64::NAN))).collect())
}

fn to_polygon(rings: Vec<Vec<Vec<f64>>>) -> Polygon {
    let mut it = rings.into_iter().map(to_ring);
    let exterior = it.next().unwrap_or(Ring(Vec::new()));
    Polygon { exterior, holes: it.collect() }
}
