//! End-to-end orchestration and the stage files that link the CLI subcommands.
//!
//! Every stage reads and writes files in one work directory under fixed names
//! (see [`files`]), so a run can be resumed or inspected between stages. When a
//! run fails, files it had already written are renamed with a `.partial` suffix.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::agglomerate::{merge_occurrences, CityCluster};
use crate::classify::{classify_clusters, ClassifyOptions};
use crate::config::{resolve_generated_at, GeocoderChoice, PipelineConfig};
use crate::emit::{emit, MapDocument};
use crate::geocode::{
    adopted_entries, attach_coordinates, reconcile_sources, write_geo, Attached, Gazetteer, GazetteerBackend,
    GeocodeBackend, GeocodeCache, GeocodeEntry, GeocodeOptions, GeocodeStats, Geocoder, Reconciled, RemoteBackend,
};
use crate::ingest::{extract_occurrences, parse_corpus, write_cities, CityOccurrence, Extraction, ParseOptions, ParsedCorpus};
use crate::topslice::{select_top_slice, SliceResult};
use crate::verify::{verify, VerificationReport, VerifyInputs};

/// Stage file names inside the work directory.
pub mod files {
    pub const RECORDS: &str = "records.jsonl";
    pub const SLICE: &str = "slice.json";
    pub const OCCURRENCES: &str = "occurrences.jsonl";
    pub const UNPARSEABLE: &str = "unparseable.jsonl";
    pub const CITIES: &str = "cities.txt";
    pub const GEO: &str = "geo.txt";
    pub const LOCATED: &str = "located.jsonl";
    pub const DROPPED: &str = "dropped.jsonl";
    pub const RECONCILE: &str = "reconcile.jsonl";
    pub const CLUSTERS: &str = "clusters.json";
    pub const DOCUMENT: &str = "document.json";
    pub const REPORT_TEXT: &str = "report.txt";
    pub const REPORT_JSONL: &str = "report.jsonl";
    pub const RUN_CONFIG: &str = "run.conf";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Slice,
    Extract,
    Geocode,
    Merge,
    Classify,
    Emit,
    Verify,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Slice => "slice",
            Stage::Extract => "extract",
            Stage::Geocode => "geocode",
            Stage::Merge => "merge",
            Stage::Classify => "classify",
            Stage::Emit => "emit",
            Stage::Verify => "verify",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage} stage failed: {message}\n  hint: {hint}")]
    Stage { stage: Stage, message: String, hint: &'static str },
    #[error("verification failed: {failures} failing check(s); see {}", report.display())]
    Verification { failures: usize, report: PathBuf },
}

impl PipelineError {
    pub fn stage(stage: Stage, message: impl fmt::Display, hint: &'static str) -> Self {
        PipelineError::Stage { stage, message: message.to_string(), hint }
    }
}

/// Serialize values as one JSON object per line.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("stage record serializes");
        out.push(b'\n');
    }
    out
}

pub fn from_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("stage value serializes");
    out.push(b'\n');
    out
}

/// Read a stage file from `dir`.
pub fn read_stage(dir: &Path, name: &str, stage: Stage) -> Result<String, PipelineError> {
    let path = dir.join(name);
    std::fs::read_to_string(&path).map_err(|e| {
        PipelineError::stage(stage, format!("cannot read {}: {e}", path.display()), "run the previous stage first")
    })
}

pub fn read_stage_json<T: DeserializeOwned>(dir: &Path, name: &str, stage: Stage) -> Result<T, PipelineError> {
    let text = read_stage(dir, name, stage)?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::stage(stage, format!("{name}: {e}"), "regenerate the file with the previous stage"))
}

pub fn read_stage_jsonl<T: DeserializeOwned>(dir: &Path, name: &str, stage: Stage) -> Result<Vec<T>, PipelineError> {
    let text = read_stage(dir, name, stage)?;
    from_jsonl(&text)
        .map_err(|e| PipelineError::stage(stage, format!("{name} {e}"), "regenerate the file with the previous stage"))
}

/// Files written during one run, renamed to `*.partial` if the run fails.
#[derive(Debug)]
pub struct OutputSet {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputSet {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        OutputSet { dir: dir.into(), written: Vec::new() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, PipelineError> {
        let hint = "check that the output directory is writable";
        std::fs::create_dir_all(&self.dir).map_err(|e| PipelineError::stage(Stage::Write, e, hint))?;
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| PipelineError::stage(Stage::Write, format!("{}: {e}", path.display()), hint))?;
        let _ = std::fs::remove_file(partial_name(&path));
        self.written.push(path.clone());
        Ok(path)
    }

    /// Rename everything written so far to `*.partial`.
    pub fn mark_partial(&mut self) {
        for path in self.written.drain(..) {
            if let Err(e) = std::fs::rename(&path, partial_name(&path)) {
                log::warn!("could not mark {} as partial: {e}", path.display());
            }
        }
    }
}

fn partial_name(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

pub fn ingest(cfg: &PipelineConfig) -> Result<ParsedCorpus, PipelineError> {
    let path = cfg.input().map_err(|e| PipelineError::stage(Stage::Config, e, "pass --input or set input in the config"))?;
    let file = std::fs::File::open(path).map_err(|e| {
        PipelineError::stage(Stage::Ingest, format!("{}: {e}", path.display()), "check the input path")
    })?;
    let opts = ParseOptions { document_type: cfg.document_type.clone() };
    let corpus = parse_corpus(BufReader::new(file), cfg.format, &opts).map_err(|e| {
        PipelineError::stage(Stage::Ingest, e, "check that the file is a Scopus CSV or WoS tagged export and --format matches")
    })?;
    for err in &corpus.row_errors {
        log::warn!("skipped input row: {err}");
    }
    if corpus.records.is_empty() {
        return Err(PipelineError::stage(
            Stage::Ingest,
            "no usable records",
            "every row was rejected or filtered; see the warnings above",
        ));
    }
    Ok(corpus)
}

pub fn slice(records: &[crate::ingest::PaperRecord], cfg: &PipelineConfig) -> Result<SliceResult, PipelineError> {
    let slice = select_top_slice(records, cfg.top_fraction)
        .map_err(|e| PipelineError::stage(Stage::Slice, e, "the corpus is empty"))?;
    if slice.exceeds(cfg.max_slice_warn) {
        log::warn!(
            "top slice holds {} papers, above {}; the map may be crowded",
            slice.selected.len(),
            cfg.max_slice_warn
        );
    }
    Ok(slice)
}

/// Output of the geocode stage.
#[derive(Debug, Clone)]
pub struct Geocoded {
    /// One entry per occurrence, in occurrence order.
    pub entries: Vec<GeocodeEntry>,
    pub stats: GeocodeStats,
    /// Per-query comparison with the gazetteer when a remote geocoder is primary.
    pub reconciled: Vec<Reconciled>,
}

pub fn load_gazetteer(cfg: &PipelineConfig) -> Result<Option<Gazetteer>, PipelineError> {
    cfg.gazetteer
        .as_deref()
        .map(|p| {
            Gazetteer::load(p).map_err(|e| {
                PipelineError::stage(Stage::Geocode, format!("{}: {e}", p.display()), "check the gazetteer TSV")
            })
        })
        .transpose()
}

pub fn geocode(
    occurrences: &[CityOccurrence],
    cfg: &PipelineConfig,
    gazetteer: Option<&Gazetteer>,
) -> Result<Geocoded, PipelineError> {
    let err = |e: &dyn fmt::Display, hint| PipelineError::stage(Stage::Geocode, e, hint);
    let mut cache = match &cfg.geo_cache {
        Some(p) => GeocodeCache::open(p).map_err(|e| err(&e, "repair or delete the geocode cache file"))?,
        None => GeocodeCache::in_memory(),
    };
    let options = GeocodeOptions {
        batch_size: cfg.batch_size,
        max_in_flight: cfg.max_in_flight,
        max_retries: cfg.max_retries,
        min_interval: Duration::from_millis(cfg.min_interval_ms),
        ..GeocodeOptions::default()
    };
    let queries: Vec<String> = occurrences.iter().map(|o| o.query()).collect();

    let gazetteer_backend = gazetteer.map(|g| GazetteerBackend::new(g.clone()));
    let run_with = |backend: &dyn GeocodeBackend, cache: &mut GeocodeCache| {
        Geocoder::new(backend, options.clone())
            .geocode_batch(&queries, cache)
            .map_err(|e| err(&e, "retry later; resolved batches are cached"))
    };

    let geocoded = match cfg.geocoder {
        GeocoderChoice::Gazetteer => {
            let backend = gazetteer_backend
                .as_ref()
                .ok_or_else(|| err(&"no gazetteer configured", "pass --gazetteer PATH"))?;
            let run = run_with(backend, &mut cache)?;
            Geocoded { entries: run.entries, stats: run.stats, reconciled: Vec::new() }
        }
        GeocoderChoice::Remote => {
            let endpoint = cfg
                .endpoint
                .as_deref()
                .ok_or_else(|| err(&"no geocoder endpoint configured", "set endpoint in the config"))?;
            let remote = RemoteBackend::from_env(endpoint, Duration::from_secs(cfg.timeout_secs));
            let primary = run_with(&remote, &mut cache)?;
            match &gazetteer_backend {
                Some(g) => {
                    let secondary = run_with(g, &mut cache)?;
                    let reconciled = reconcile_sources(&primary.entries, &secondary.entries, cfg.consistency_tol)
                        .map_err(|e| err(&e, "internal alignment error"))?;
                    Geocoded {
                        entries: adopted_entries(&primary.entries, &reconciled),
                        stats: primary.stats,
                        reconciled,
                    }
                }
                None => Geocoded { entries: primary.entries, stats: primary.stats, reconciled: Vec::new() },
            }
        }
    };
    cache.flush().map_err(|e| err(&e, "check that the cache file is writable"))?;
    Ok(geocoded)
}

/// Everything a full run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub document: MapDocument,
    pub report: VerificationReport,
    pub slice: SliceResult,
    pub extraction: Extraction,
    pub geocoded: Geocoded,
    pub attached: Attached,
    pub clusters: Vec<CityCluster>,
    pub files: Vec<PathBuf>,
}

/// Run every stage and write all outputs into `cfg.out`.
///
/// Returns [`PipelineError::Verification`] when a check fails, unless
/// `cfg.no_verify` is set; the outputs are complete either way.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    let mut outputs = OutputSet::new(&cfg.out);
    match run_stages(cfg, &mut outputs) {
        Ok(out) => {
            if !cfg.no_verify && out.report.has_failures() {
                return Err(PipelineError::Verification {
                    failures: out.report.count_failures() + out.report.position_failures(),
                    report: cfg.out.join(files::REPORT_TEXT),
                });
            }
            Ok(out)
        }
        Err(e) => {
            outputs.mark_partial();
            Err(e)
        }
    }
}

/// The effective configuration with the timestamp resolved.
pub fn effective_parameters(cfg: &PipelineConfig) -> (PipelineConfig, BTreeMap<String, String>) {
    let mut resolved = cfg.clone();
    let stamp = resolve_generated_at(cfg.generated_at.as_deref());
    resolved.generated_at = (!stamp.is_empty()).then_some(stamp);
    let params = resolved.to_pairs();
    (resolved, params)
}

fn run_stages(cfg: &PipelineConfig, outputs: &mut OutputSet) -> Result<PipelineOutput, PipelineError> {
    let (cfg, params) = effective_parameters(cfg);
    let generated_at = cfg.generated_at.clone().unwrap_or_default();

    let corpus = ingest(&cfg)?;
    log::info!("ingest: {} records ({} rows skipped, {} filtered)", corpus.records.len(), corpus.row_errors.len(), corpus.filtered);
    let slice = slice(&corpus.records, &cfg)?;
    log::info!(
        "slice: {} of {} papers at threshold {} (nominal {})",
        slice.selected.len(),
        slice.corpus_size,
        slice.threshold_citations,
        slice.nominal_k
    );
    let extraction = extract_occurrences(&slice.selected);
    log::info!(
        "extract: {} occurrences, {} unparseable addresses, {} duplicates collapsed",
        extraction.occurrences.len(),
        extraction.unparseable.len(),
        extraction.duplicates_collapsed
    );

    outputs.write(files::RUN_CONFIG, cfg.to_text().as_bytes())?;
    outputs.write(files::RECORDS, &to_jsonl(&corpus.records))?;
    outputs.write(files::SLICE, &to_json(&slice))?;
    outputs.write(files::OCCURRENCES, &to_jsonl(&extraction.occurrences))?;
    outputs.write(files::UNPARSEABLE, &to_jsonl(&extraction.unparseable))?;
    let mut cities = Vec::new();
    write_cities(&mut cities, &extraction.occurrences).expect("write to memory");
    outputs.write(files::CITIES, &cities)?;

    let gazetteer = load_gazetteer(&cfg)?;
    let geocoded = geocode(&extraction.occurrences, &cfg, gazetteer.as_ref())?;
    log::info!(
        "geocode: {} queries, {} cache hits, {} backend batches, {} unresolved",
        geocoded.stats.queries,
        geocoded.stats.cache_hits,
        geocoded.stats.backend_batches,
        geocoded.stats.unresolved
    );
    let mut geo = Vec::new();
    write_geo(&mut geo, &geocoded.entries).expect("write to memory");
    outputs.write(files::GEO, &geo)?;
    if !geocoded.reconciled.is_empty() {
        outputs.write(files::RECONCILE, &to_jsonl(&geocoded.reconciled))?;
    }

    let attached = attach_coordinates(&extraction.occurrences, &geocoded.entries)
        .map_err(|e| PipelineError::stage(Stage::Geocode, e, "cities.txt and geo.txt are out of step; rerun geocode"))?;
    for d in &attached.dropped {
        log::warn!("unresolved location dropped: {} (paper {})", d.query, d.paper_id);
    }
    outputs.write(files::LOCATED, &to_jsonl(&attached.located))?;
    outputs.write(files::DROPPED, &to_jsonl(&attached.dropped))?;

    let clusters = merge_occurrences(&attached.located, cfg.merge)
        .map_err(|e| PipelineError::stage(Stage::Merge, e, "rerun geocode so every occurrence has a coordinate"))?;
    outputs.write(files::CLUSTERS, &to_json(&clusters))?;

    let circles = classify_clusters(&clusters, ClassifyOptions { radius_base: cfg.radius_base, log_base: cfg.log_base })
        .map_err(|e| PipelineError::stage(Stage::Classify, e, "check radius_base and log_base"))?;
    let document = MapDocument::new(cfg.title.clone(), generated_at, cfg.radius_base, params.clone(), circles);
    outputs.write(files::DOCUMENT, &to_json(&document))?;
    for format in &cfg.formats {
        outputs.write(format.file_name(), &emit(&document, *format))?;
    }

    let mut report = verify(
        &clusters,
        &slice,
        &VerifyInputs {
            gazetteer: gazetteer.as_ref(),
            tolerance_deg: cfg.position_tol,
            dropped_unresolved: attached.dropped.len(),
            unparseable_addresses: extraction.unparseable.len(),
            reconciled: &geocoded.reconciled,
        },
    )
    .map_err(|e| PipelineError::stage(Stage::Verify, e, "clusters and slice come from different runs"))?;
    report.parameters = params;
    outputs.write(files::REPORT_TEXT, report.to_text().as_bytes())?;
    outputs.write(files::REPORT_JSONL, report.to_json_lines().as_bytes())?;

    Ok(PipelineOutput {
        document,
        report,
        slice,
        extraction,
        geocoded,
        attached,
        clusters,
        files: outputs.written().to_vec(),
    })
}
