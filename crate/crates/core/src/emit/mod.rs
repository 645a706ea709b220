//! Map file writers.
//!
//! Every writer is a pure function of a [`MapDocument`]: the timestamp is part of
//! the document, so the same document always serializes to the same bytes.

mod geojson;
mod gps;
mod html;
mod kml;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::ClassifiedCircle;

pub use geojson::{emit_geojson, parse_geojson, GeoJsonCircle};
pub use gps::{emit_gps_text, parse_gps_text, GpsRow, GPS_HEADER};
pub use html::emit_html;
pub use kml::emit_kml;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("unknown map format {0:?} (expected gps, geojson, kml or html)")]
    UnknownFormat(String),
    #[error("invalid {format} input at line {line}: {message}")]
    Invalid { format: &'static str, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDocument {
    pub title: String,
    pub generated_at: String,
    pub radius_base: f64,
    /// Effective run configuration, echoed into each output.
    pub parameters: BTreeMap<String, String>,
    /// Sorted by count descending, then name and country.
    pub circles: Vec<ClassifiedCircle>,
}

impl MapDocument {
    pub fn new(
        title: impl Into<String>,
        generated_at: impl Into<String>,
        radius_base: f64,
        parameters: BTreeMap<String, String>,
        mut circles: Vec<ClassifiedCircle>,
    ) -> Self {
        circles.sort_by(|a, b| {
            b.cluster
                .count
                .cmp(&a.cluster.count)
                .then_with(|| a.cluster.canonical_name.cmp(&b.cluster.canonical_name))
                .then_with(|| a.cluster.country.cmp(&b.cluster.country))
                .then_with(|| a.cluster.anchor.latitude.total_cmp(&b.cluster.anchor.latitude))
                .then_with(|| a.cluster.anchor.longitude.total_cmp(&b.cluster.anchor.longitude))
        });
        MapDocument {
            title: title.into(),
            generated_at: generated_at.into(),
            radius_base,
            parameters,
            circles,
        }
    }
}

/// Label shown for a circle: `"name, country"`.
pub fn circle_label(c: &ClassifiedCircle) -> String {
    format!("{}, {}", c.cluster.canonical_name, c.cluster.country)
}

pub(crate) fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapFormat {
    Gps,
    Geojson,
    Kml,
    Html,
}

impl MapFormat {
    pub const ALL: [MapFormat; 4] = [MapFormat::Gps, MapFormat::Geojson, MapFormat::Kml, MapFormat::Html];

    /// Conventional output file name.
    pub fn file_name(&self) -> &'static str {
        match self {
            MapFormat::Gps => "ucities.txt",
            MapFormat::Geojson => "map.geojson",
            MapFormat::Kml => "map.kml",
            MapFormat::Html => "map.html",
        }
    }
}

impl FromStr for MapFormat {
    type Err = EmitError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gps" | "txt" => Ok(MapFormat::Gps),
            "geojson" | "json" => Ok(MapFormat::Geojson),
            "kml" => Ok(MapFormat::Kml),
            "html" => Ok(MapFormat::Html),
            other => Err(EmitError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for MapFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapFormat::Gps => "gps",
            MapFormat::Geojson => "geojson",
            MapFormat::Kml => "kml",
            MapFormat::Html => "html",
        })
    }
}

pub fn emit(doc: &MapDocument, format: MapFormat) -> Vec<u8> {
    match format {
        MapFormat::Gps => emit_gps_text(doc),
        MapFormat::Geojson => emit_geojson(doc),
        MapFormat::Kml => emit_kml(doc),
        MapFormat::Html => emit_html(doc),
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn document_sorts_circles() {
        let d = doc(vec![
            circle("b", "x", 1.0, 1.0, 2, 0.0),
            circle("a", "x", 1.0, 1.0, 2, 0.0),
            circle("c", "x", 1.0, 1.0, 9, 90.0),
        ]);
        let names: Vec<_> = d.circles.iter().map(|c| c.cluster.canonical_name.as_str()).collect();
        assert_eq!(names, vec!["c", "a", "b"]);
    }

    #[test]
    fn formats_parse() {
        for f in MapFormat::ALL {
            assert_eq!(f.to_string().parse::<MapFormat>().unwrap(), f);
        }
        assert!("svg".parse::<MapFormat>().is_err());
    }

    #[test]
    fn emitters_are_deterministic() {
        let d = doc(vec![circle("vienna", "austria", 48.2, 16.37, 12, 92.0)]);
        for f in MapFormat::ALL {
            assert_eq!(emit(&d, f), emit(&d.clone(), f));
        }
    }
}
