use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use scimap_core::agglomerate::{merge_occurrences, CityCluster};
use scimap_core::classify::{classify_clusters, ClassifyOptions};
use scimap_core::config::PipelineConfig;
use scimap_core::emit::{emit, MapDocument};
use scimap_core::geocode::{attach_coordinates, write_geo, DroppedOccurrence, Reconciled};
use scimap_core::ingest::{extract_occurrences, write_cities, CityOccurrence, PaperRecord, UnparseableAddress};
use scimap_core::pipeline::{
    self, effective_parameters, files, read_stage_json, read_stage_jsonl, to_json, to_jsonl, OutputSet,
    PipelineError, Stage,
};
use scimap_core::topslice::SliceResult;
use scimap_core::verify::{verify, VerifyInputs};

/// Map the cities behind a field's most highly-cited papers.
#[derive(Parser)]
#[command(name = "scimap", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage end to end.
    Run(RunArgs),
    /// Parse a bibliographic export into records.jsonl.
    Ingest(IngestArgs),
    /// Select the top-cited slice and extract city occurrences (cities.txt).
    Slice(SliceArgs),
    /// Geocode cities.txt into geo.txt.
    Geocode(GeocodeArgs),
    /// Merge located occurrences into city clusters.
    Merge(MergeArgs),
    /// Rank clusters into percentile classes.
    Classify(ClassifyArgs),
    /// Write map files.
    Emit(EmitArgs),
    /// Check the map against the corpus and a gazetteer.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Work directory holding stage files and outputs.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Extra `key=value` setting, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct InputFlags {
    /// Scopus CSV or WoS tagged export.
    #[arg(long)]
    input: Option<PathBuf>,
    /// `scopus_csv` or `wos_tagged`.
    #[arg(long)]
    input_format: Option<String>,
    /// Keep only this document type (e.g. Article).
    #[arg(long)]
    document_type: Option<String>,
}

#[derive(Args)]
struct SliceFlags {
    /// Share of the corpus to select: `0.01`, `1%` or `1/100`.
    #[arg(long)]
    top_fraction: Option<String>,
}

#[derive(Args)]
struct GeocodeFlags {
    /// `gazetteer` (offline) or `remote`.
    #[arg(long)]
    geocoder: Option<String>,
    /// Gazetteer TSV: backend, cross-check source and position reference.
    #[arg(long)]
    gazetteer: Option<PathBuf>,
    /// Remote geocoder URL; the key is read from SCIMAP_GEOCODER_KEY.
    #[arg(long)]
    endpoint: Option<String>,
    /// Persistent geocode cache journal.
    #[arg(long)]
    geo_cache: Option<PathBuf>,
    /// Degrees within which two sources agree.
    #[arg(long)]
    consistency_tol: Option<f64>,
}

#[derive(Args)]
struct MergeFlags {
    /// Merge option: 1 (0.01°), 2 (0.1°) or 3 (0.3°).
    #[arg(long, conflicts_with = "merge_radius")]
    merge: Option<u8>,
    /// Custom merge radius in degrees.
    #[arg(long)]
    merge_radius: Option<f64>,
}

#[derive(Args)]
struct ClassifyFlags {
    /// Circle radius for a count of one.
    #[arg(long)]
    radius_base: Option<f64>,
    /// `10` or `e`.
    #[arg(long)]
    log_base: Option<String>,
    /// Map title.
    #[arg(long)]
    title: Option<String>,
    /// Timestamp stamped on outputs; `now` for the current time.
    #[arg(long)]
    generated_at: Option<String>,
}

#[derive(Args)]
struct EmitFlags {
    /// Map formats: gps, geojson, kml, html (comma-separated or repeated).
    #[arg(long = "format", value_delimiter = ',')]
    formats: Vec<String>,
}

#[derive(Args)]
struct VerifyFlags {
    /// Degrees an anchor may sit from its gazetteer entry.
    #[arg(long)]
    position_tol: Option<f64>,
    /// Write the report but exit zero on failing checks.
    #[arg(long)]
    no_verify: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    input: InputFlags,
    #[command(flatten)]
    slice: SliceFlags,
    #[command(flatten)]
    geocode: GeocodeFlags,
    #[command(flatten)]
    merge: MergeFlags,
    #[command(flatten)]
    classify: ClassifyFlags,
    #[command(flatten)]
    emit: EmitFlags,
    #[command(flatten)]
    verify: VerifyFlags,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    input: InputFlags,
}

#[derive(Args)]
struct SliceArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    slice: SliceFlags,
}

#[derive(Args)]
struct GeocodeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    geocode: GeocodeFlags,
}

#[derive(Args)]
struct MergeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    merge: MergeFlags,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    classify: ClassifyFlags,
}

#[derive(Args)]
struct EmitArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    emit: EmitFlags,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Gazetteer TSV used as the position reference.
    #[arg(long)]
    gazetteer: Option<PathBuf>,
    #[command(flatten)]
    verify: VerifyFlags,
}

/// Collects flag values as config pairs.
#[derive(Default)]
struct Overrides(Vec<(String, String)>);

impl Overrides {
    fn put(&mut self, key: &str, value: Option<impl ToString>) {
        if let Some(v) = value {
            self.0.push((key.to_string(), v.to_string()));
        }
    }

    fn path(&mut self, key: &str, value: &Option<PathBuf>) {
        self.put(key, value.as_ref().map(|p| p.display().to_string()));
    }
}

impl InputFlags {
    fn collect(&self, o: &mut Overrides) {
        o.path("input", &self.input);
        o.put("format", self.input_format.as_ref());
        o.put("document_type", self.document_type.as_ref());
    }
}

impl SliceFlags {
    fn collect(&self, o: &mut Overrides) {
        o.put("top_fraction", self.top_fraction.as_ref());
    }
}

impl GeocodeFlags {
    fn collect(&self, o: &mut Overrides) {
        o.put("geocoder", self.geocoder.as_ref());
        o.path("gazetteer", &self.gazetteer);
        o.put("endpoint", self.endpoint.as_ref());
        o.path("geo_cache", &self.geo_cache);
        o.put("consistency_tol", self.consistency_tol);
    }
}

impl MergeFlags {
    fn collect(&self, o: &mut Overrides) {
        o.put("merge", self.merge);
        o.put("merge", self.merge_radius.map(|r| format!("{r}deg")));
    }
}

impl ClassifyFlags {
    fn collect(&self, o: &mut Overrides) {
        o.put("radius_base", self.radius_base);
        o.put("log_base", self.log_base.as_ref());
        o.put("title", self.title.as_ref());
        o.put("generated_at", self.generated_at.as_ref());
    }
}

impl EmitFlags {
    fn collect(&self, o: &mut Overrides) {
        if !self.formats.is_empty() {
            o.put("formats", Some(self.formats.join(",")));
        }
    }
}

impl VerifyFlags {
    fn collect(&self, o: &mut Overrides) {
        o.put("position_tol", self.position_tol);
        if self.no_verify {
            o.put("no_verify", Some(true));
        }
    }
}

/// Config file (if any), then `--set` pairs, then flags.
fn load_config(common: &Common, overrides: Overrides) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    for kv in &common.set {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("--set expects KEY=VALUE, got {kv:?}");
        };
        cfg.set(k.trim(), v.trim(), None)?;
    }
    cfg.apply(overrides.0.iter().map(|(k, v)| (k.as_str(), v.as_str())), None)?;
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn with_outputs<T>(cfg: &PipelineConfig, f: impl FnOnce(&mut OutputSet) -> Result<T, PipelineError>) -> Result<T, PipelineError> {
    let mut outputs = OutputSet::new(&cfg.out);
    let (effective, _) = effective_parameters(cfg);
    outputs
        .write(files::RUN_CONFIG, effective.to_text().as_bytes())
        .and_then(|_| f(&mut outputs))
        .inspect_err(|_| outputs.mark_partial())
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let mut o = Overrides::default();
    args.input.collect(&mut o);
    args.slice.collect(&mut o);
    args.geocode.collect(&mut o);
    args.merge.collect(&mut o);
    args.classify.collect(&mut o);
    args.emit.collect(&mut o);
    args.verify.collect(&mut o);
    let cfg = load_config(&args.common, o)?;
    match pipeline::run_pipeline(&cfg) {
        Ok(out) => {
            println!(
                "{} papers sliced (threshold {}), {} clusters, {} files written to {}",
                out.slice.selected.len(),
                out.slice.threshold_citations,
                out.clusters.len(),
                out.files.len(),
                cfg.out.display()
            );
            if out.report.has_failures() {
                eprintln!("verification failed; continuing because of --no-verify");
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e @ PipelineError::Verification { .. }) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(2))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_ingest(args: IngestArgs) -> Result<ExitCode> {
    let mut o = Overrides::default();
    args.input.collect(&mut o);
    let cfg = load_config(&args.common, o)?;
    let corpus = pipeline::ingest(&cfg)?;
    with_outputs(&cfg, |out| out.write(files::RECORDS, &to_jsonl(&corpus.records)))?;
    println!(
        "{} records ({} rows skipped, {} filtered)",
        corpus.records.len(),
        corpus.row_errors.len(),
        corpus.filtered
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_slice(args: SliceArgs) -> Result<ExitCode> {
    let mut o = Overrides::default();
    args.slice.collect(&mut o);
    let cfg = load_config(&args.common, o)?;
    let records: Vec<PaperRecord> = read_stage_jsonl(&cfg.out, files::RECORDS, Stage::Slice)?;
    let slice = pipeline::slice(&records, &cfg)?;
    let extraction = extract_occurrences(&slice.selected);
    with_outputs(&cfg, |out| {
        out.write(files::SLICE, &to_json(&slice))?;
        out.write(files::OCCURRENCES, &to_jsonl(&extraction.occurrences))?;
        out.write(files::UNPARSEABLE, &to_jsonl(&extraction.unparseable))?;
        let mut cities = Vec::new();
        write_cities(&mut cities, &extraction.occurrences).expect("write to memory");
        out.write(files::CITIES, &cities)
    })?;
    println!(
        "{} of {} papers at threshold {}; {} occurrences, {} unparseable addresses",
        slice.selected.len(),
        slice.corpus_size,
        slice.threshold_citations,
        extraction.occurrences.len(),
        extraction.unparseable.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_geocode(args: GeocodeArgs) -> Result<ExitCode> {
    let mut o = Overrides::default();
    args.geocode.collect(&mut o);
    let cfg = load_config(&args.common, o)?;
    let occurrences: Vec<CityOccurrence> = read_stage_jsonl(&cfg.out, files::OCCURRENCES, Stage::Geocode)?;
    let gazetteer = pipeline::load_gazetteer(&cfg)?;
    let geocoded = pipeline::geocode(&occurrences, &cfg, gazetteer.as_ref())?;
    let attached = attach_coordinates(&occurrences, &geocoded.entries)?;
    with_outputs(&cfg, |out| {
        let mut geo = Vec::new();
        write_geo(&mut geo, &geocoded.entries).expect("write to memory");
        out.write(files::GEO, &geo)?;
        if !geocoded.reconciled.is_empty() {
            out.write(files::RECONCILE, &to_jsonl(&geocoded.reconciled))?;
        }
        out.write(files::LOCATED, &to_jsonl(&attached.located))?;
        out.write(files::DROPPED, &to_jsonl(&attached.dropped))
    })?;
    let s = geocoded.stats;
    println!(
        "{} queries: {} cache hits, {} backend batches, {} unresolved",
        s.queries, s.cache_hits, s.backend_batches, s.unresolved
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_merge(args: MergeArgs) -> Result<ExitCode> {
    let mut o = Overrides::default();
    args.merge.collect(&mut o);
    let cfg = load_config(&args.common, o)?;
    let located: Vec<CityOccurrence> = read_stage_jsonl(&cfg.out, files::LOCATED, Stage::Merge)?;
    let clusters = merge_occurrences(&located, cfg.merge)?;
    with_outputs(&cfg, |out| out.write(files::CLUSTERS, &to_json(&clusters)))?;
    println!("{} occurrences merged into {} clusters at radius {}", located.len(), clusters.len(), cfg.merge);
    Ok(ExitCode::SUCCESS)
}

fn cmd_classify(args: ClassifyArgs) -> Result<ExitCode> {
    let mut o = Overrides::default();
    args.classify.collect(&mut o);
    let cfg = load_config(&args.common, o)?;
    let clusters: Vec<CityCluster> = read_stage_json(&cfg.out, files::CLUSTERS, Stage::Classify)?;
    let (cfg, params) = effective_parameters(&cfg);
    let circles = classify_clusters(&clusters, ClassifyOptions { radius_base: cfg.radius_base, log_base: cfg.log_base })?;
    let doc = MapDocument::new(
        cfg.title.clone(),
        cfg.generated_at.clone().unwrap_or_default(),
        cfg.radius_base,
        params,
        circles,
    );
    with_outputs(&cfg, |out| out.write(files::DOCUMENT, &to_json(&doc)))?;
    println!("{} circles classified", doc.circles.len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_emit(args: EmitArgs) -> Result<ExitCode> {
    let mut o = Overrides::default();
    args.emit.collect(&mut o);
    let cfg = load_config(&args.common, o)?;
    let doc: MapDocument = read_stage_json(&cfg.out, files::DOCUMENT, Stage::Emit)?;
    let written = with_outputs(&cfg, |out| {
        for f in &cfg.formats {
            out.write(f.file_name(), &emit(&doc, *f))?;
        }
        Ok(out.written().to_vec())
    })?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn read_optional_jsonl<T: serde::de::DeserializeOwned>(dir: &Path, name: &str) -> Result<Vec<T>> {
    if dir.join(name).exists() {
        Ok(read_stage_jsonl(dir, name, Stage::Verify)?)
    } else {
        Ok(Vec::new())
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode> {
    let mut o = Overrides::default();
    o.path("gazetteer", &args.gazetteer);
    args.verify.collect(&mut o);
    let cfg = load_config(&args.common, o)?;
    let clusters: Vec<CityCluster> = read_stage_json(&cfg.out, files::CLUSTERS, Stage::Verify)?;
    let slice: SliceResult = read_stage_json(&cfg.out, files::SLICE, Stage::Verify)?;
    let dropped: Vec<DroppedOccurrence> = read_optional_jsonl(&cfg.out, files::DROPPED)?;
    let unparseable: Vec<UnparseableAddress> = read_optional_jsonl(&cfg.out, files::UNPARSEABLE)?;
    let reconciled: Vec<Reconciled> = read_optional_jsonl(&cfg.out, files::RECONCILE)?;
    let gazetteer = pipeline::load_gazetteer(&cfg)?;
    let (cfg, params) = effective_parameters(&cfg);

    let mut report = verify(
        &clusters,
        &slice,
        &VerifyInputs {
            gazetteer: gazetteer.as_ref(),
            tolerance_deg: cfg.position_tol,
            dropped_unresolved: dropped.len(),
            unparseable_addresses: unparseable.len(),
            reconciled: &reconciled,
        },
    )?;
    report.parameters = params;
    with_outputs(&cfg, |out| {
        out.write(files::REPORT_TEXT, report.to_text().as_bytes())?;
        out.write(files::REPORT_JSONL, report.to_json_lines().as_bytes())
    })?;
    print!("{}", report.to_text());
    if report.has_failures() && !cfg.no_verify {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Slice(a) => cmd_slice(a),
        Command::Geocode(a) => cmd_geocode(a),
        Command::Merge(a) => cmd_merge(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Emit(a) => cmd_emit(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
