//! Persistent geocode cache: an append-only TSV journal.
//!
//! Line format: `query<TAB>source<TAB>lat<TAB>lon<TAB>resolved_at`, with `-` in both
//! coordinate columns for an unresolved answer. The last line for a
//! `(query, source)` key wins.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{GeoPoint, GeocodeEntry};

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache journal line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("cannot cache query containing tab or newline: {0:?}")]
    BadQuery(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn clean(s: &str) -> bool {
    !s.contains(['\t', '\n', '\r'])
}

pub fn format_journal_line(entry: &GeocodeEntry) -> String {
    let (lat, lon) = match entry.point {
        Some(p) => (format!("{}", p.latitude), format!("{}", p.longitude)),
        None => ("-".to_string(), "-".to_string()),
    };
    format!("{}\t{}\t{}\t{}\t{}\n", entry.query, entry.source, lat, lon, entry.resolved_at)
}

/// Parse journal text. A final line without a newline that fails to parse is
/// treated as a torn write and skipped.
pub fn parse_journal(text: &str) -> Result<Vec<GeocodeEntry>, CacheError> {
    let mut out = Vec::new();
    let terminated = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line) {
            Ok(e) => out.push(e),
            Err(message) => {
                if i + 1 == lines.len() && !terminated {
                    log::warn!("ignoring torn final cache line {line_no}");
                    break;
                }
                return Err(CacheError::Line { line: line_no, message });
            }
        }
    }
    Ok(out)
}

fn parse_line(line: &str) -> Result<GeocodeEntry, String> {
    let f: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
    if f.len() != 5 {
        return Err(format!("expected 5 fields, found {}", f.len()));
    }
    if f[0].is_empty() || f[1].is_empty() {
        return Err("empty query or source".into());
    }
    let point = match (f[2], f[3]) {
        ("-", "-") => None,
        (lat, lon) => {
            let lat: f64 = lat.parse().map_err(|_| format!("bad latitude {lat:?}"))?;
            let lon: f64 = lon.parse().map_err(|_| format!("bad longitude {lon:?}"))?;
            Some(GeoPoint::new(lat, lon).map_err(|e| e.to_string())?)
        }
    };
    Ok(GeocodeEntry {
        query: f[0].to_string(),
        point,
        source: f[1].to_string(),
        resolved_at: f[4].to_string(),
    })
}

#[derive(Debug, Default)]
pub struct GeocodeCache {
    entries: HashMap<(String, String), GeocodeEntry>,
    path: Option<PathBuf>,
    writer: Option<BufWriter<File>>,
}

impl GeocodeCache {
    /// A cache that lives only in memory.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open (or create) a journal file, replaying existing entries.
    pub fn open(path: &Path) -> Result<Self, CacheError> {
        let mut cache = GeocodeCache {
            entries: HashMap::new(),
            path: Some(path.to_path_buf()),
            writer: None,
        };
        if path.exists() {
            let mut text = String::new();
            std::io::Read::read_to_string(&mut BufReader::new(File::open(path)?), &mut text)?;
            for e in parse_journal(&text)? {
                cache.entries.insert((e.query.clone(), e.source.clone()), e);
            }
            if !text.is_empty() && !text.ends_with('\n') {
                // keep the next append on its own line
                OpenOptions::new().append(true).open(path)?.write_all(b"\n")?;
            }
        }
        Ok(cache)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, query: &str, source: &str) -> Option<&GeocodeEntry> {
        self.entries.get(&(query.to_string(), source.to_string()))
    }

    pub fn insert(&mut self, entry: GeocodeEntry) -> Result<(), CacheError> {
        if !clean(&entry.query) || !clean(&entry.source) || !clean(&entry.resolved_at) {
            return Err(CacheError::BadQuery(entry.query));
        }
        if let Some(path) = &self.path {
            if self.writer.is_none() {
                let file = OpenOptions::new().create(true).append(true).open(path)?;
                self.writer = Some(BufWriter::new(file));
            }
            self.writer
                .as_mut()
                .unwrap()
                .write_all(format_journal_line(&entry).as_bytes())?;
        }
        self.entries.insert((entry.query.clone(), entry.source.clone()), entry);
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), CacheError> {
        if let Some(w) = self.writer.as_mut() {
            w.flush()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Drop for GeocodeCache {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}
