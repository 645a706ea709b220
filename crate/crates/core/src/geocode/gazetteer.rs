//! Offline gazetteer: a TSV of `name<TAB>country<TAB>lat<TAB>lon`.
//!
//! Names and countries are normalized on load and matched exactly. Blank lines
//! and lines starting with `#` are ignored. The same table serves as a geocoding
//! backend and as the reference for position checks.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use super::{BackendError, GeoPoint, GeocodeBackend};
use crate::ingest::normalize;

#[derive(Debug, Error)]
pub enum GazetteerError {
    #[error("gazetteer line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: HashMap<String, GeoPoint>,
}

fn key(name: &str, country: &str) -> String {
    format!("{}, {}", normalize(name), normalize(country))
}

impl Gazetteer {
    pub fn parse<R: BufRead>(input: R) -> Result<Self, GazetteerError> {
        let mut entries = HashMap::new();
        for (i, line) in input.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| GazetteerError::Line { line: line_no, message };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 tab-separated fields, found {}", fields.len())));
            }
            let (name, country) = (fields[0].trim(), fields[1].trim());
            if normalize(name).is_empty() || normalize(country).is_empty() {
                return Err(err("empty name or country".into()));
            }
            let lat: f64 = fields[2].trim().parse().map_err(|_| err(format!("bad latitude {:?}", fields[2])))?;
            let lon: f64 = fields[3].trim().parse().map_err(|_| err(format!("bad longitude {:?}", fields[3])))?;
            let point = GeoPoint::new(lat, lon).map_err(|e| err(e.to_string()))?;
            if entries.insert(key(name, country), point).is_some() {
                log::warn!("gazetteer line {line_no}: duplicate entry for {name}, {country}; later entry wins");
            }
        }
        Ok(Gazetteer { entries })
    }

    pub fn load(path: &Path) -> Result<Self, GazetteerError> {
        let file = std::fs::File::open(path)?;
        Self::parse(std::io::BufReader::new(file))
    }

    pub fn insert(&mut self, name: &str, country: &str, point: GeoPoint) {
        self.entries.insert(key(name, country), point);
    }

    pub fn lookup(&self, name: &str, country: &str) -> Option<GeoPoint> {
        self.entries.get(&key(name, country)).copied()
    }

    /// Look up a `"city, country"` query.
    pub fn lookup_query(&self, query: &str) -> Option<GeoPoint> {
        let (name, country) = query.rsplit_once(',')?;
        self.lookup(name, country)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Geocoding backend answering from a [`Gazetteer`]; misses come back as `(0, 0)`
/// like a remote geocoder's.
#[derive(Debug, Clone)]
pub struct GazetteerBackend {
    gazetteer: Gazetteer,
}

impl GazetteerBackend {
    pub fn new(gazetteer: Gazetteer) -> Self {
        GazetteerBackend { gazetteer }
    }
}

impl GeocodeBackend for GazetteerBackend {
    fn source_id(&self) -> &str {
        "gazetteer"
    }

    fn lookup(&self, queries: &[String]) -> Result<Vec<(f64, f64)>, BackendError> {
        Ok(queries
            .iter()
            .map(|q| match self.gazetteer.lookup_query(q) {
                Some(p) => (p.latitude, p.longitude),
                None => (0.0, 0.0),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: &str = "# name\tcountry\tlat\tlon\nVienna\tAustria\t48.2082\t16.3738\n\nZürich\tSwitzerland\t47.3769\t8.5417\n";

    #[test]
    fn lookups_are_normalized() {
        let g = Gazetteer::parse(TABLE.as_bytes()).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.lookup("VIENNA", " austria").unwrap().latitude, 48.2082);
        assert!(g.lookup_query("zurich, switzerland").is_some());
        assert!(g.lookup_query("zurich, austria").is_none());
        assert!(g.lookup_query("nocomma").is_none());
    }

    #[test]
    fn rejects_bad_lines() {
        for (bad, line) in [
            ("Vienna\tAustria\t48.2\n", 1),
            ("Vienna\tAustria\tx\t16\n", 1),
            ("# c\nNull\tIsland\t0\t0\n", 2),
            ("A\tB\t100\t0\n", 1),
            ("\tB\t1\t1\n", 1),
        ] {
            match Gazetteer::parse(bad.as_bytes()) {
                Err(GazetteerError::Line { line: l, .. }) => assert_eq!(l, line, "{bad:?}"),
                other => panic!("{bad:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn backend_answers_misses_with_sentinel() {
        let b = GazetteerBackend::new(Gazetteer::parse(TABLE.as_bytes()).unwrap());
        let out = b.lookup(&["vienna, austria".into(), "atlantis, sea".into()]).unwrap();
        assert_eq!(out, vec![(48.2082, 16.3738), (0.0, 0.0)]);
    }
}
