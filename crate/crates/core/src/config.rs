//! Run configuration: flat `key = value` text, one setting per line.
//!
//! Blank lines and lines starting with `#` are ignored. Later settings override
//! earlier ones, so command-line overrides are applied as a second layer on top
//! of a file. The effective configuration is echoed into every output.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agglomerate::MergeRadius;
use crate::classify::{LogBase, DEFAULT_RADIUS_BASE};
use crate::emit::MapFormat;
use crate::geocode::DEFAULT_TOLERANCE_DEG;
use crate::ingest::InputFormat;
use crate::topslice::{Fraction, DEFAULT_MAX_SLICE_WARN};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("config key {key}: {message}")]
    Value { key: String, message: String },
    #[error("config: {0}")]
    Missing(&'static str),
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Parse `key = value` lines into ordered pairs. Keys are not checked here.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            message: format!("expected key = value, found {line:?}"),
        })?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(ConfigError::Syntax { line: i + 1, message: format!("bad key {key:?}") });
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeocoderChoice {
    Gazetteer,
    Remote,
}

impl FromStr for GeocoderChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "gazetteer" => Ok(GeocoderChoice::Gazetteer),
            "remote" => Ok(GeocoderChoice::Remote),
            other => Err(format!("unknown geocoder {other:?} (expected gazetteer or remote)")),
        }
    }
}

impl std::fmt::Display for GeocoderChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GeocoderChoice::Gazetteer => "gazetteer",
            GeocoderChoice::Remote => "remote",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub format: InputFormat,
    /// Keep only records of this document type when the export carries one.
    pub document_type: Option<String>,
    pub top_fraction: Fraction,
    pub max_slice_warn: usize,
    pub geocoder: GeocoderChoice,
    /// Backend table for `geocoder = gazetteer`; cross-check source for
    /// `geocoder = remote`; position-check reference in both cases.
    pub gazetteer: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub geo_cache: Option<PathBuf>,
    pub timeout_secs: u64,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub min_interval_ms: u64,
    pub consistency_tol: f64,
    pub position_tol: f64,
    pub merge: MergeRadius,
    pub radius_base: f64,
    pub log_base: LogBase,
    pub formats: Vec<MapFormat>,
    pub out: PathBuf,
    pub title: String,
    /// Timestamp written into outputs; see [`resolve_generated_at`].
    pub generated_at: Option<String>,
    /// Report verification failures without failing the run.
    pub no_verify: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: None,
            format: InputFormat::ScopusCsv,
            document_type: None,
            top_fraction: Fraction::one_percent(),
            max_slice_warn: DEFAULT_MAX_SLICE_WARN,
            geocoder: GeocoderChoice::Gazetteer,
            gazetteer: None,
            endpoint: None,
            geo_cache: None,
            timeout_secs: 30,
            batch_size: crate::geocode::MAX_BATCH,
            max_in_flight: 1,
            max_retries: 3,
            min_interval_ms: 0,
            consistency_tol: DEFAULT_TOLERANCE_DEG,
            position_tol: DEFAULT_TOLERANCE_DEG,
            merge: MergeRadius::default(),
            radius_base: DEFAULT_RADIUS_BASE,
            log_base: LogBase::Ten,
            formats: MapFormat::ALL.to_vec(),
            out: PathBuf::from("out"),
            title: "Excellence map".into(),
            generated_at: None,
            no_verify: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value { key: key.into(), message: e.to_string() })
}

fn opt(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_string())
}

impl PipelineConfig {
    /// Apply one setting. Relative paths are joined onto `base` when given.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<(), ConfigError> {
        let path = |v: &str| -> Option<PathBuf> {
            opt(v).map(|p| match base {
                Some(b) if Path::new(&p).is_relative() => b.join(p),
                _ => PathBuf::from(p),
            })
        };
        match key {
            "input" => self.input = path(value),
            "format" => self.format = parse(key, value)?,
            "document_type" => self.document_type = opt(value),
            "top_fraction" => self.top_fraction = parse(key, value)?,
            "max_slice_warn" => self.max_slice_warn = parse(key, value)?,
            "geocoder" => self.geocoder = parse(key, value)?,
            "gazetteer" => self.gazetteer = path(value),
            "endpoint" => self.endpoint = opt(value),
            "geo_cache" => self.geo_cache = path(value),
            "timeout_secs" => self.timeout_secs = parse(key, value)?,
            "batch_size" => {
                self.batch_size = parse(key, value)?;
                if !(1..=crate::geocode::MAX_BATCH).contains(&self.batch_size) {
                    return Err(ConfigError::Value {
                        key: key.into(),
                        message: format!("must be between 1 and {}", crate::geocode::MAX_BATCH),
                    });
                }
            }
            "max_in_flight" => self.max_in_flight = parse::<usize>(key, value)?.max(1),
            "max_retries" => self.max_retries = parse(key, value)?,
            "min_interval_ms" => self.min_interval_ms = parse(key, value)?,
            "consistency_tol" => self.consistency_tol = parse_tolerance(key, value)?,
            "position_tol" => self.position_tol = parse_tolerance(key, value)?,
            "merge" => self.merge = parse(key, value)?,
            "radius_base" => {
                self.radius_base = parse(key, value)?;
                if !(self.radius_base.is_finite() && self.radius_base > 0.0) {
                    return Err(ConfigError::Value { key: key.into(), message: "must be positive".into() });
                }
            }
            "log_base" => self.log_base = parse(key, value)?,
            "formats" => {
                self.formats = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_, _>>()?;
                self.formats.dedup();
            }
            "out" => self.out = path(value).unwrap_or_else(|| PathBuf::from(".")),
            "title" => self.title = value.to_string(),
            "generated_at" => self.generated_at = opt(value),
            "no_verify" => self.no_verify = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Apply every pair in order.
    pub fn apply<'a>(
        &mut self,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
        base: Option<&Path>,
    ) -> Result<(), ConfigError> {
        pairs.into_iter().try_for_each(|(k, v)| self.set(k, v, base))
    }

    pub fn from_text(text: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = PipelineConfig::default();
        let pairs = parse_pairs(text)?;
        cfg.apply(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())), base)?;
        Ok(cfg)
    }

    /// Load a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_text(&text, path.parent())
    }

    /// Effective settings as `key -> value`, in the same syntax [`set`](Self::set) accepts.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        let show = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        put("input", show(&self.input));
        put("format", self.format.to_string());
        put("document_type", self.document_type.clone().unwrap_or_default());
        put("top_fraction", self.top_fraction.to_string());
        put("max_slice_warn", self.max_slice_warn.to_string());
        put("geocoder", self.geocoder.to_string());
        put("gazetteer", show(&self.gazetteer));
        put("endpoint", self.endpoint.clone().unwrap_or_default());
        put("geo_cache", show(&self.geo_cache));
        put("timeout_secs", self.timeout_secs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("max_in_flight", self.max_in_flight.to_string());
        put("max_retries", self.max_retries.to_string());
        put("min_interval_ms", self.min_interval_ms.to_string());
        put("consistency_tol", self.consistency_tol.to_string());
        put("position_tol", self.position_tol.to_string());
        put("merge", self.merge.to_string());
        put("radius_base", self.radius_base.to_string());
        put("log_base", self.log_base.to_string());
        put("formats", self.formats.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(","));
        put("out", self.out.display().to_string());
        put("title", self.title.clone());
        put("generated_at", self.generated_at.clone().unwrap_or_default());
        put("no_verify", self.no_verify.to_string());
        m
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn input(&self) -> Result<&Path, ConfigError> {
        self.input.as_deref().ok_or(ConfigError::Missing("no input file given (set `input`)"))
    }
}

fn parse_tolerance(key: &str, value: &str) -> Result<f64, ConfigError> {
    let t: f64 = parse(key, value)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(ConfigError::Value { key: key.into(), message: "must be a non-negative number of degrees".into() });
    }
    Ok(t)
}

/// The timestamp to stamp on outputs: the configured one (`now` meaning the
/// current time), else `SOURCE_DATE_EPOCH`, else empty so that reruns stay
/// byte-identical.
pub fn resolve_generated_at(configured: Option<&str>) -> String {
    let stamp = |t: chrono::DateTime<chrono::Utc>| t.format("%Y-%m-%dT%H:%M:%SZ").to_string();
    match configured {
        Some("now") => stamp(chrono::Utc::now()),
        Some(t) => t.to_string(),
        None => std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|s| s.trim().parse::<i64>().ok())
            .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0))
            .map(stamp)
            .unwrap_or_default(),
    }
}
