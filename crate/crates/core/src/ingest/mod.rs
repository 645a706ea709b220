//! Bibliographic export parsing and city-occurrence extraction.

mod address;
mod scopus;
mod wos;

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geocode::GeoPoint;

pub use address::{is_postcode_like, normalize, parse_address, AddressError, AddressRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub paper_id: String,
    pub citation_count: u64,
    pub publication_year: i32,
    pub affiliations_raw: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityOccurrence {
    pub paper_id: String,
    pub city: String,
    pub country: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinate: Option<GeoPoint>,
}

impl CityOccurrence {
    /// The geocoder query for this occurrence, `"city, country"`.
    pub fn query(&self) -> String {
        format!("{}, {}", self.city, self.country)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    ScopusCsv,
    WosTagged,
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "scopus_csv" | "scopus" | "csv" => Ok(InputFormat::ScopusCsv),
            "wos_tagged" | "wos" => Ok(InputFormat::WosTagged),
            _ => Err(format!("unknown input format {s:?} (expected scopus_csv or wos_tagged)")),
        }
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputFormat::ScopusCsv => "scopus_csv",
            InputFormat::WosTagged => "wos_tagged",
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Keep only records whose document type equals this (case-insensitive),
    /// e.g. `"Article"`. Scopus column `Document Type`, WoS tag `DT`.
    pub document_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedCorpus {
    pub records: Vec<PaperRecord>,
    /// Rows that could not be read; they are skipped.
    pub row_errors: Vec<RowError>,
    /// Rows dropped by the document-type filter.
    pub filtered: usize,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input is empty")]
    Empty,
    #[error("missing required column {0:?}")]
    MissingColumn(String),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("malformed cities file, line {line}: {message}")]
    CitiesLine { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parse a bibliographic export into paper records, in input order.
pub fn parse_corpus<R: Read>(
    source: R,
    format: InputFormat,
    options: &ParseOptions,
) -> Result<ParsedCorpus, IngestError> {
    let corpus = match format {
        InputFormat::ScopusCsv => scopus::parse(source, options)?,
        InputFormat::WosTagged => wos::parse(source, options)?,
    };
    for e in &corpus.row_errors {
        log::warn!("skipped row: {e}");
    }
    Ok(corpus)
}

/// Split a Scopus-style affiliations cell on `;`.
pub(crate) fn split_affiliations(cell: &str) -> Vec<String> {
    cell.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnparseableAddress {
    pub paper_id: String,
    pub raw: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub occurrences: Vec<CityOccurrence>,
    pub unparseable: Vec<UnparseableAddress>,
    /// Identical addresses repeated on one paper and collapsed.
    pub duplicates_collapsed: usize,
}

/// City occurrences under integer counting.
///
/// Identical raw addresses on one paper collapse to one occurrence; distinct
/// addresses each count, even when they name the same city. Dedup never crosses
/// paper boundaries.
pub fn extract_occurrences(records: &[PaperRecord]) -> Extraction {
    let mut out = Extraction::default();
    for record in records {
        let mut seen: HashSet<&str> = HashSet::new();
        for raw in &record.affiliations_raw {
            if !seen.insert(raw.as_str()) {
                out.duplicates_collapsed += 1;
                continue;
            }
            match parse_address(&record.paper_id, raw) {
                Ok(addr) => out.occurrences.push(CityOccurrence {
                    paper_id: record.paper_id.clone(),
                    city: addr.city,
                    country: addr.country,
                    coordinate: None,
                }),
                Err(e) => {
                    log::warn!("unparseable address on {}: {raw:?}: {e}", record.paper_id);
                    out.unparseable.push(UnparseableAddress {
                        paper_id: record.paper_id.clone(),
                        raw: raw.clone(),
                        reason: e.to_string(),
                    });
                }
            }
        }
    }
    out
}

/// Write `cities.txt`: one `city, country` line per occurrence.
pub fn write_cities<W: Write>(mut out: W, occurrences: &[CityOccurrence]) -> std::io::Result<()> {
    for occ in occurrences {
        writeln!(out, "{}, {}", occ.city, occ.country)?;
    }
    Ok(())
}

/// Read `cities.txt` back into `(city, country)` pairs.
pub fn read_cities<R: BufRead>(input: R) -> Result<Vec<(String, String)>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (city, country) = line.split_once(", ").ok_or_else(|| IngestError::CitiesLine {
            line: i + 1,
            message: "expected \"city, country\"".into(),
        })?;
        if city.is_empty() || country.is_empty() || country.contains(',') {
            return Err(IngestError::CitiesLine {
                line: i + 1,
                message: "expected \"city, country\"".into(),
            });
        }
        out.push((city.to_string(), country.to_string()));
    }
    Ok(out)
}
