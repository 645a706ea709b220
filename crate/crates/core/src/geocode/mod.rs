//! Resolving `"city, country"` queries to coordinates.
//!
//! Queries go to a [`GeocodeBackend`] in batches of at most [`MAX_BATCH`], after
//! consulting a [`GeocodeCache`]. Output order always equals input order: the
//! `cities.txt` / `geo.txt` pair is joined by position.

mod cache;
mod gazetteer;
mod point;
mod reconcile;
mod remote;

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::CityOccurrence;

pub use cache::{format_journal_line, parse_journal, CacheError, GeocodeCache};
pub use gazetteer::{Gazetteer, GazetteerBackend, GazetteerError};
pub use point::{GeoPoint, GeoPointError};
pub use reconcile::{adopted_entries, reconcile_sources, Agreement, Reconciled, DEFAULT_TOLERANCE_DEG};
pub use remote::{decode_response, RemoteBackend, KEY_ENV};

/// Largest batch a backend is ever sent.
pub const MAX_BATCH: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeocodeEntry {
    pub query: String,
    /// `None` when the source answered `(0, 0)` or nothing usable.
    pub point: Option<GeoPoint>,
    pub source: String,
    pub resolved_at: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    /// Network-level failure; retried.
    #[error("transport: {0}")]
    Transport(String),
    /// The source refused the request; not retried.
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

/// A geocoding source. `lookup` returns one `(lat, lon)` pair per query, in
/// order; `(0, 0)` means not found.
pub trait GeocodeBackend: Sync {
    fn source_id(&self) -> &str;
    fn lookup(&self, queries: &[String]) -> Result<Vec<(f64, f64)>, BackendError>;
}

#[derive(Debug, Error)]
pub enum GeocodeError {
    #[error("batch {batch}: backend unreachable after {attempts} attempts: {message}")]
    Transport { batch: usize, attempts: u32, message: String },
    #[error("batch {batch}: {source_id} returned a bad response: {message}")]
    Source { batch: usize, source_id: String, message: String },
    #[error("alignment: {0}")]
    Alignment(String),
    #[error("malformed geo file, line {line}: {message}")]
    GeoLine { line: usize, message: String },
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct GeocodeOptions {
    /// Clamped to `1..=MAX_BATCH`.
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub retry_backoff: Duration,
    /// Minimum spacing between the starts of two backend calls.
    pub min_interval: Duration,
    /// Timestamp recorded on fresh entries; current UTC time when `None`.
    pub timestamp: Option<String>,
}

impl Default for GeocodeOptions {
    fn default() -> Self {
        GeocodeOptions {
            batch_size: MAX_BATCH,
            max_in_flight: 1,
            max_retries: 3,
            retry_backoff: Duration::from_millis(500),
            min_interval: Duration::ZERO,
            timestamp: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GeocodeStats {
    pub queries: usize,
    pub cache_hits: usize,
    pub backend_batches: usize,
    pub backend_queries: usize,
    pub retries: usize,
    pub unresolved: usize,
}

#[derive(Debug, Clone)]
pub struct GeocodeRun {
    pub entries: Vec<GeocodeEntry>,
    pub stats: GeocodeStats,
}

pub struct Geocoder<'a> {
    backend: &'a dyn GeocodeBackend,
    options: GeocodeOptions,
}

struct Pacer {
    next: Mutex<Instant>,
    interval: Duration,
}

impl Pacer {
    fn wait(&self) {
        if self.interval.is_zero() {
            return;
        }
        let start = {
            let mut next = self.next.lock().unwrap();
            let now = Instant::now();
            let start = (*next).max(now);
            *next = start + self.interval;
            start
        };
        let now = Instant::now();
        if start > now {
            std::thread::sleep(start - now);
        }
    }
}

impl<'a> Geocoder<'a> {
    pub fn new(backend: &'a dyn GeocodeBackend, options: GeocodeOptions) -> Self {
        Geocoder { backend, options }
    }

    pub fn source_id(&self) -> &str {
        self.backend.source_id()
    }

    fn call_with_retries(
        &self,
        batch: usize,
        queries: &[String],
        pacer: &Pacer,
    ) -> Result<(Vec<(f64, f64)>, usize), GeocodeError> {
        let mut attempt = 0u32;
        loop {
            pacer.wait();
            match self.backend.lookup(queries) {
                Ok(pairs) if pairs.len() == queries.len() => return Ok((pairs, attempt as usize)),
                Ok(pairs) => {
                    return Err(GeocodeError::Source {
                        batch,
                        source_id: self.source_id().to_string(),
                        message: format!("{} answers for {} queries", pairs.len(), queries.len()),
                    })
                }
                Err(BackendError::Transport(message)) => {
                    if attempt >= self.options.max_retries {
                        return Err(GeocodeError::Transport { batch, attempts: attempt + 1, message });
                    }
                    let delay = self.options.retry_backoff.saturating_mul(1 << attempt.min(16));
                    log::warn!("batch {batch}: {message}; retrying in {delay:?}");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(e) => {
                    return Err(GeocodeError::Source {
                        batch,
                        source_id: self.source_id().to_string(),
                        message: e.to_string(),
                    })
                }
            }
        }
    }

    /// Resolve `queries`, consulting and filling `cache`.
    ///
    /// Distinct uncached queries are sent in first-seen order, chunked into
    /// batches of at most `batch_size`; up to `max_in_flight` batches run at
    /// once. Results of batches that succeeded are cached even if a later batch
    /// fails.
    pub fn geocode_batch(&self, queries: &[String], cache: &mut GeocodeCache) -> Result<GeocodeRun, GeocodeError> {
        let source = self.source_id().to_string();
        let mut stats = GeocodeStats { queries: queries.len(), ..Default::default() };

        let mut pending: Vec<String> = Vec::new();
        let mut seen: HashMap<&str, ()> = HashMap::new();
        for q in queries {
            if cache.get(q, &source).is_some() {
                stats.cache_hits += 1;
            } else if seen.insert(q.as_str(), ()).is_none() {
                pending.push(q.clone());
            }
        }

        let batch_size = self.options.batch_size.clamp(1, MAX_BATCH);
        let batches: Vec<&[String]> = pending.chunks(batch_size).collect();
        let pacer = Pacer { next: Mutex::new(Instant::now()), interval: self.options.min_interval };
        let in_flight = self.options.max_in_flight.max(1);
        let timestamp = self
            .options
            .timestamp
            .clone()
            .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));

        let mut results: Vec<Option<Result<(Vec<(f64, f64)>, usize), GeocodeError>>> =
            (0..batches.len()).map(|_| None).collect();
        for wave_start in (0..batches.len()).step_by(in_flight) {
            let wave_end = (wave_start + in_flight).min(batches.len());
            if wave_end - wave_start == 1 {
                results[wave_start] = Some(self.call_with_retries(wave_start, batches[wave_start], &pacer));
            } else {
                std::thread::scope(|s| {
                    let handles: Vec<_> = (wave_start..wave_end)
                        .map(|i| {
                            let batch = batches[i];
                            let pacer = &pacer;
                            s.spawn(move || self.call_with_retries(i, batch, pacer))
                        })
                        .collect();
                    for (i, h) in (wave_start..wave_end).zip(handles) {
                        results[i] = Some(h.join().expect("geocode worker panicked"));
                    }
                });
            }
            if results[wave_start..wave_end].iter().any(|r| matches!(r, Some(Err(_)))) {
                break;
            }
        }

        let mut first_error = None;
        for (i, result) in results.into_iter().enumerate() {
            match result {
                Some(Ok((pairs, retries))) => {
                    stats.backend_batches += 1;
                    stats.backend_queries += batches[i].len();
                    stats.retries += retries;
                    for (q, (lat, lon)) in batches[i].iter().zip(pairs) {
                        let point = GeoPoint::from_response(lat, lon);
                        if point.is_none() && !(lat == 0.0 && lon == 0.0) {
                            log::warn!("{source}: discarding out-of-range answer ({lat}, {lon}) for {q:?}");
                        }
                        cache.insert(GeocodeEntry {
                            query: q.clone(),
                            point,
                            source: source.clone(),
                            resolved_at: timestamp.clone(),
                        })?;
                    }
                }
                Some(Err(e)) if first_error.is_none() => first_error = Some(e),
                _ => {}
            }
        }
        cache.flush()?;
        if let Some(e) = first_error {
            return Err(e);
        }

        let entries: Vec<GeocodeEntry> = queries
            .iter()
            .map(|q| cache.get(q, &source).cloned().expect("every query cached"))
            .collect();
        stats.unresolved = entries.iter().filter(|e| e.point.is_none()).count();
        Ok(GeocodeRun { entries, stats })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedOccurrence {
    pub index: usize,
    pub paper_id: String,
    pub query: String,
}

#[derive(Debug, Clone, Default)]
pub struct Attached {
    pub located: Vec<CityOccurrence>,
    pub dropped: Vec<DroppedOccurrence>,
}

/// Attach each entry's point to the occurrence at the same position. Unresolved
/// occurrences are removed and listed in `dropped`.
pub fn attach_coordinates(
    occurrences: &[CityOccurrence],
    entries: &[GeocodeEntry],
) -> Result<Attached, GeocodeError> {
    if occurrences.len() != entries.len() {
        return Err(GeocodeError::Alignment(format!(
            "{} occurrences but {} geocode entries",
            occurrences.len(),
            entries.len()
        )));
    }
    let mut out = Attached::default();
    for (i, (occ, entry)) in occurrences.iter().zip(entries).enumerate() {
        let query = occ.query();
        if entry.query != query {
            return Err(GeocodeError::Alignment(format!(
                "position {i}: occurrence {query:?} but entry {:?}",
                entry.query
            )));
        }
        match entry.point {
            Some(p) => out.located.push(CityOccurrence { coordinate: Some(p), ..occ.clone() }),
            None => out.dropped.push(DroppedOccurrence { index: i, paper_id: occ.paper_id.clone(), query }),
        }
    }
    Ok(out)
}

/// Write `geo.txt`: `city, country<TAB>lat<TAB>lon` per entry, misses as `0,0`.
pub fn write_geo<W: Write>(mut out: W, entries: &[GeocodeEntry]) -> std::io::Result<()> {
    for e in entries {
        match e.point {
            Some(p) => writeln!(out, "{}\t{}", e.query, p)?,
            None => writeln!(out, "{}\t{:.6}\t{:.6}", e.query, 0.0, 0.0)?,
        }
    }
    Ok(())
}

/// Read `geo.txt` into `(query, point)` pairs; `0,0` rows come back as `None`.
pub fn read_geo<R: BufRead>(input: R) -> Result<Vec<(String, Option<GeoPoint>)>, GeocodeError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let err = |message: &str| GeocodeError::GeoLine { line: i + 1, message: message.to_string() };
        let mut parts = line.split('\t');
        let (Some(query), Some(lat), Some(lon), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(err("expected 3 tab-separated fields"));
        };
        if query.is_empty() {
            return Err(err("empty query"));
        }
        let lat: f64 = lat.parse().map_err(|_| err("bad latitude"))?;
        let lon: f64 = lon.parse().map_err(|_| err("bad longitude"))?;
        let point = match GeoPoint::new(lat, lon) {
            Ok(p) => Some(p),
            Err(GeoPointError::Sentinel) => None,
            Err(e) => return Err(err(&e.to_string())),
        };
        out.push((query.to_string(), point));
    }
    Ok(out)
}
