//! End-to-end run: acquire text, detect, extract on the enabled paths,
//! harmonize, geocode, validate (and repair on the LLM path), emit.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::detect::{detect_source, load_signatures, DetectionResult, SignatureSet};
use crate::emit::{self, EmitError, WarningLogEntry, WarningSink};
use crate::eval::{self, EvalInput, MetricsReport, RepairLogEntry};
use crate::geocode::{GeocodeCache, GeocodeCounters, Gazetteer, Geocoder, Regions};
use crate::harmonize::{draft_fields, harmonize, harmonize_candidate, MappingTable};
use crate::llm::doubles::{DropoutOracle, InvalidThenFix, NeverFix, Oracle};
use crate::llm::wire::{WireBackend, WireConfig};
use crate::llm::{
    build_extraction_prompt, call_backend, repair_loop, sanitize_candidate, Backend, BackendError, BackendRequest,
    Prompt, RepairContext, RetryPolicy, Tier, DEFAULT_BUDGET_CHARS, DEFAULT_MAX_REPAIR_ATTEMPTS,
    DEFAULT_PRIORITY_HEADERS,
};
use crate::parallel::{map_documents, Gate};
use crate::rules::{dispatch, RuleSets};
use crate::schema::{default_schema, validate, CaseRecord, Engine, ExtractionPath, SchemaDefinition};
use crate::synth::parse_oracle_markers;
use crate::text::{
    prenormalize, split_cases_compiled, strip_trailer, CaseSegment, DocumentKind, EngineSpec, QualityThresholds,
    RawDocument, TextExtractor,
};
use crate::warning::{codes, Severity, Stage, Warning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathsEnabled {
    Rule,
    Llm,
    Both,
}

impl PathsEnabled {
    pub fn rule(self) -> bool {
        matches!(self, PathsEnabled::Rule | PathsEnabled::Both)
    }

    pub fn llm(self) -> bool {
        matches!(self, PathsEnabled::Llm | PathsEnabled::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Wire,
    Oracle,
    DropoutOracle,
    InvalidThenFix,
    NeverFix,
}

/// Unset config paths fall back to the bundled defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    pub paths_enabled: PathsEnabled,
    pub schema_path: Option<PathBuf>,
    pub signatures_path: Option<PathBuf>,
    pub rulesets_dir: Option<PathBuf>,
    pub mappings_dir: Option<PathBuf>,
    pub gazetteer_path: Option<PathBuf>,
    pub regions_path: Option<PathBuf>,
    pub cache_path: Option<PathBuf>,
    pub backend: BackendKind,
    /// Field omission probability for the dropout oracle.
    pub dropout_p: f64,
    /// Share of cases given invalid candidates by the invalid-then-fix and
    /// never-fix backends.
    pub invalid_rate: f64,
    pub budget_chars: usize,
    pub max_repair_attempts: u32,
    pub max_in_flight: usize,
    pub workers: usize,
    pub backend_timeout_s: f64,
    pub retry_base_ms: u64,
    pub gold_path: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Engine chain for PDFs; plain-text files always use the plaintext engine.
    pub pdf_chain: Vec<EngineSpec>,
    pub min_chars: usize,
    pub min_alnum: f64,
    /// Recorded in every record's provenance when set.
    pub ingest_ts: Option<String>,
}

impl RunConfig {
    pub fn new(input_dir: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        let q = QualityThresholds::default();
        RunConfig {
            input_dir: input_dir.into(),
            output_dir: output_dir.into(),
            paths_enabled: PathsEnabled::Both,
            schema_path: None,
            signatures_path: None,
            rulesets_dir: None,
            mappings_dir: None,
            gazetteer_path: None,
            regions_path: None,
            cache_path: None,
            backend: BackendKind::Oracle,
            dropout_p: 0.1,
            invalid_rate: 0.2,
            budget_chars: DEFAULT_BUDGET_CHARS,
            max_repair_attempts: DEFAULT_MAX_REPAIR_ATTEMPTS,
            max_in_flight: 4,
            workers: 1,
            backend_timeout_s: 60.0,
            retry_base_ms: 200,
            gold_path: None,
            seed: None,
            pdf_chain: vec![
                EngineSpec::command(Engine::Layout, "pdftotext -layout {input} -", 60.0),
                EngineSpec::command(Engine::Basic, "pdftotext {input} -", 60.0),
            ],
            min_chars: q.min_chars,
            min_alnum: q.min_alnum,
            ingest_ts: None,
        }
    }

    /// SHA-256 of the serialized configuration.
    pub fn digest(&self) -> String {
        eval::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("configuration: {0}")]
    Invalid(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Emit(#[from] EmitError),
    #[error(transparent)]
    Alignment(#[from] eval::AlignmentError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loaded configuration shared read-only by all workers.
pub struct Resources {
    pub schema: SchemaDefinition,
    pub signatures: SignatureSet,
    pub rulesets: RuleSets,
    pub mappings: MappingTable,
    pub geocoder: Geocoder,
}

fn require(path: &Option<PathBuf>) -> Result<Option<&Path>, RunError> {
    match path {
        Some(p) if !p.exists() => Err(RunError::Invalid(format!("{} does not exist", p.display()))),
        Some(p) => Ok(Some(p.as_path())),
        None => Ok(None),
    }
}

impl Resources {
    pub fn builtin() -> Self {
        Resources {
            schema: default_schema(),
            signatures: SignatureSet::builtin(),
            rulesets: RuleSets::builtin(),
            mappings: MappingTable::builtin(),
            geocoder: Geocoder::builtin(),
        }
    }

    pub fn load(config: &RunConfig) -> Result<Self, RunError> {
        let schema = match require(&config.schema_path)? {
            Some(p) => SchemaDefinition::load(p).map_err(|e| RunError::Invalid(e.to_string()))?,
            None => default_schema(),
        };
        let signatures = match require(&config.signatures_path)? {
            Some(p) => load_signatures(p)?,
            None => SignatureSet::builtin(),
        };
        let rulesets = match require(&config.rulesets_dir)? {
            Some(p) => RuleSets::load_dir(p)?,
            None => RuleSets::builtin(),
        };
        let mappings = match require(&config.mappings_dir)? {
            Some(p) => MappingTable::load_dir(p)?,
            None => MappingTable::builtin(),
        };
        let gazetteer = match require(&config.gazetteer_path)? {
            Some(p) => Gazetteer::load(p)?,
            None => Gazetteer::builtin(),
        };
        let regions = match require(&config.regions_path)? {
            Some(p) => Regions::load(p)?,
            None => Regions::builtin(),
        };
        let cache = match &config.cache_path {
            Some(p) => GeocodeCache::open(p)?,
            None => GeocodeCache::in_memory(),
        };
        Ok(Resources {
            schema,
            signatures,
            rulesets,
            mappings,
            geocoder: Geocoder::new(gazetteer, regions, cache),
        })
    }
}

/// Counts every completion request passed through.
pub struct CountingBackend {
    inner: Arc<dyn Backend>,
    calls: AtomicU64,
}

impl CountingBackend {
    pub fn new(inner: Arc<dyn Backend>) -> Self {
        CountingBackend {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for CountingBackend {
    fn label(&self) -> &str {
        self.inner.label()
    }

    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}

/// Input documents in file-name order. Only `.txt`, `.text`, and `.pdf`
/// files are read.
pub fn list_documents(dir: &Path) -> Result<Vec<RawDocument>, RunError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| ["txt", "text", "pdf"].contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    paths.sort();
    Ok(paths.iter().filter_map(|p| RawDocument::from_path(p)).collect())
}

/// Gold records embedded in the input documents' trailers.
pub fn embedded_gold(docs: &[RawDocument]) -> Vec<CaseRecord> {
    docs.iter()
        .filter(|d| d.declared_kind == DocumentKind::Plaintext)
        .filter_map(|d| std::fs::read(&d.path).ok())
        .flat_map(|b| parse_oracle_markers(&String::from_utf8_lossy(&b)))
        .collect()
}

/// Builds the configured backend. Test doubles take their gold from the
/// document trailers, falling back to the gold file.
pub fn make_backend(config: &RunConfig, docs: &[RawDocument]) -> Result<Arc<dyn Backend>, RunError> {
    if config.backend == BackendKind::Wire {
        let wire = WireConfig::from_env().ok_or_else(|| {
            RunError::Invalid(format!(
                "wire backend needs {} in the environment",
                crate::llm::wire::ENV_EXTRACT_ENDPOINT
            ))
        })?;
        return Ok(Arc::new(WireBackend::new(wire)));
    }
    let mut gold = embedded_gold(docs);
    if gold.is_empty() {
        if let Some(p) = require(&config.gold_path)? {
            gold = emit::read_jsonl(p)?;
        }
    }
    Ok(match config.backend {
        BackendKind::Oracle => Arc::new(Oracle::new(&gold)),
        BackendKind::DropoutOracle => Arc::new(DropoutOracle::new(&gold, config.dropout_p, config.seed.unwrap_or(0))),
        BackendKind::InvalidThenFix => Arc::new(InvalidThenFix::new(&gold, config.invalid_rate)),
        BackendKind::NeverFix => Arc::new(NeverFix::new(&gold, config.invalid_rate)),
        BackendKind::Wire => unreachable!("handled above"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeSample {
    pub path: ExtractionPath,
    pub document_id: String,
    pub segment_index: usize,
    pub seconds: f64,
}

#[derive(Debug, Default)]
struct DocOutput {
    segments: usize,
    failed: bool,
    rule: Vec<CaseRecord>,
    llm: Vec<CaseRecord>,
    withheld: Vec<String>,
    warnings: Vec<WarningLogEntry>,
    repair_log: Vec<RepairLogEntry>,
    runtimes: Vec<RuntimeSample>,
}

/// Where a segment came from.
struct Site<'a> {
    doc: &'a RawDocument,
    engine: Engine,
    det: &'a DetectionResult,
    tz: Option<&'a str>,
    seg: &'a CaseSegment,
}

struct Ctx<'a> {
    config: &'a RunConfig,
    res: &'a Resources,
    extractor: &'a TextExtractor,
    backend: Option<&'a dyn Backend>,
    gate: &'a Gate,
}

impl Ctx<'_> {
    fn ts(&self) -> &str {
        self.config.ingest_ts.as_deref().unwrap_or("")
    }

    fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            retries: 2,
            base_delay: std::time::Duration::from_millis(self.config.retry_base_ms),
        }
    }

    fn log(&self, out: &mut DocOutput, doc: &str, case_id: Option<&str>, warnings: Vec<Warning>) {
        let ts = self.ts().to_string();
        out.warnings
            .extend(warnings.into_iter().map(|w| WarningLogEntry::from_warning(w, doc, case_id, &ts)));
    }

    fn finish(&self, record: &mut CaseRecord, site: &Site, path: ExtractionPath, w: &mut Vec<Warning>) {
        let Site { doc, engine, det, seg, .. } = *site;
        if record.case_id.trim().is_empty() {
            record.case_id = format!("{}-{}", doc.document_id, seg.segment_index);
            w.push(Warning::warn(
                Stage::Parse,
                codes::CASE_ID_FALLBACK,
                format!("no case identifier found; using {}", record.case_id),
            ));
        }
        let p = &mut record.provenance;
        p.source_label = det.source_label.clone();
        p.source_family = det.family;
        p.extraction_path = path;
        p.engine_used = engine;
        p.document_id = doc.document_id.clone();
        p.ingest_ts = self.config.ingest_ts.clone();
    }

    fn rule_segment(&self, site: &Site, out: &mut DocOutput) {
        let Site { doc, det, tz, seg, .. } = *site;
        let start = Instant::now();
        let draft = dispatch(det, seg, &self.res.rulesets);
        let mut w = draft.warnings.clone();
        let h = harmonize(&draft_fields(&draft), &det.source_label, &self.res.mappings, &self.res.schema, tz);
        w.extend(h.warnings);
        let mut record = h.record;
        self.finish(&mut record, site, ExtractionPath::Rule, &mut w);
        w.extend(self.res.geocoder.geocode_record(&mut record));
        let report = validate(&record.to_value(), &self.res.schema);
        w.extend(report.violations.iter().map(|v| {
            Warning::warn(Stage::Validate, codes::VALIDATION_VIOLATION, v.to_string())
        }));
        record.provenance.warnings_count = w.len() as u32;
        out.runtimes.push(RuntimeSample {
            path: ExtractionPath::Rule,
            document_id: doc.document_id.clone(),
            segment_index: seg.segment_index,
            seconds: start.elapsed().as_secs_f64(),
        });
        self.log(out, &doc.document_id, Some(&record.case_id.clone()), w);
        out.rule.push(record);
    }

    fn extract_candidate(&self, backend: &dyn Backend, seg: &CaseSegment, request_id: &str, w: &mut Vec<Warning>) -> Option<serde_json::Value> {
        let prompt = build_extraction_prompt(&seg.text, &self.res.schema, self.config.budget_chars, &DEFAULT_PRIORITY_HEADERS);
        for attempt in 0..2 {
            let request = BackendRequest {
                prompt: Prompt::Extract(prompt.clone()),
                tier: Tier::Extract,
                timeout_s: self.config.backend_timeout_s,
                request_id: if attempt == 0 { request_id.to_string() } else { format!("{request_id}:retry") },
            };
            let response = {
                let _permit = self.gate.acquire();
                call_backend(&request, backend, self.retry())
            };
            let response = match response {
                Ok(r) => r,
                Err(e) => {
                    w.push(Warning::new(Stage::Extract, Severity::Error, codes::BACKEND_ERROR, e.to_string()));
                    return None;
                }
            };
            match sanitize_candidate(&response.text, &self.res.schema) {
                Ok((v, sw)) => {
                    w.extend(sw);
                    if v.as_object().is_some_and(|m| m.is_empty()) {
                        w.push(Warning::warn(Stage::Sanitize, codes::EMPTY_CANDIDATE, "backend returned an empty object"));
                    }
                    return Some(v);
                }
                Err(e) if attempt == 0 => {
                    w.push(Warning::warn(Stage::Sanitize, codes::CANDIDATE_PARSE_FAILED, format!("{e}; retrying")));
                }
                Err(e) => {
                    w.push(Warning::new(Stage::Sanitize, Severity::Error, codes::CANDIDATE_PARSE_FAILED, e.to_string()));
                }
            }
        }
        None
    }

    fn llm_segment(&self, site: &Site, out: &mut DocOutput) {
        let Site { doc, det, tz, seg, .. } = *site;
        let Some(backend) = self.backend else {
            return;
        };
        let start = Instant::now();
        let prefix = format!("{}:{}", doc.document_id, seg.segment_index);
        let mut w = Vec::new();
        let Some(candidate) = self.extract_candidate(backend, seg, &format!("{prefix}:extract"), &mut w) else {
            self.log(out, &doc.document_id, None, w);
            return;
        };
        let h = harmonize_candidate(&candidate, &det.source_label, &self.res.schema, tz);
        w.extend(h.warnings);
        let mut record = h.record;
        self.finish(&mut record, site, ExtractionPath::Llm, &mut w);
        w.extend(self.res.geocoder.geocode_record(&mut record));
        let ctx = RepairContext {
            request_prefix: format!("{prefix}:repair"),
            timeout_s: self.config.backend_timeout_s,
            retry: self.retry(),
        };
        let outcome = repair_loop(record.to_value(), &self.res.schema, backend, self.config.max_repair_attempts, &ctx);
        w.extend(outcome.warnings.iter().cloned());
        let case_id = record.case_id.clone();
        out.repair_log.push(RepairLogEntry {
            document_id: doc.document_id.clone(),
            segment_index: seg.segment_index,
            case_id: case_id.clone(),
            pre_valid: outcome.pre_valid,
            passed: outcome.passed,
            attempts: outcome.attempts,
            reverted_paths: outcome.reverted.clone(),
        });
        let repaired = if outcome.passed {
            match CaseRecord::from_value(&outcome.record) {
                Ok(r) => Some(r),
                Err(e) => {
                    w.push(Warning::new(Stage::Repair, Severity::Error, codes::REPAIR_EXHAUSTED, format!("repaired record does not fit the record type: {e}")));
                    None
                }
            }
        } else {
            None
        };
        out.runtimes.push(RuntimeSample {
            path: ExtractionPath::Llm,
            document_id: doc.document_id.clone(),
            segment_index: seg.segment_index,
            seconds: start.elapsed().as_secs_f64(),
        });
        match repaired {
            Some(mut r) => {
                r.provenance.repair_count = outcome.attempts;
                r.provenance.warnings_count = w.len() as u32;
                self.log(out, &doc.document_id, Some(&case_id), w);
                out.llm.push(r);
            }
            None => {
                self.log(out, &doc.document_id, Some(&case_id), w);
                out.withheld.push(case_id);
            }
        }
    }

    fn document(&self, doc: &RawDocument) -> DocOutput {
        let mut out = DocOutput::default();
        let chain = match doc.declared_kind {
            DocumentKind::Plaintext => vec![EngineSpec::plaintext()],
            DocumentKind::Pdf => self.config.pdf_chain.clone(),
        };
        let thresholds = QualityThresholds {
            min_chars: self.config.min_chars,
            min_alnum: self.config.min_alnum,
        };
        let extracted = match self.extractor.extract_text(doc, &chain, thresholds) {
            Ok(t) => t,
            Err(e) => {
                out.failed = true;
                let w = Warning::new(Stage::Extract, Severity::Error, codes::EXTRACTION_FAILED, e.to_string());
                self.log(&mut out, &doc.document_id, None, vec![w]);
                return out;
            }
        };
        let mut w = Vec::new();
        let text = prenormalize(strip_trailer(&extracted.text));
        // Quality is judged on the visible document only.
        let visible = crate::text::ExtractedText::measure(text.clone(), extracted.engine_used, thresholds);
        if !visible.meets_quality {
            w.push(Warning::warn(
                Stage::Extract,
                codes::LOW_QUALITY_TEXT,
                format!("{} chars, alphanumeric ratio {:.2}", visible.char_count, visible.alnum_ratio),
            ));
        }
        let det = detect_source(&text, &self.res.signatures);
        let (segments, tz) = match self.res.signatures.get(&det.source_label) {
            Some(sig) if !sig.split.is_empty() => (split_cases_compiled(&text, &sig.split), sig.signature.tz_default.clone()),
            Some(sig) => (vec![CaseSegment::whole(&text)], sig.signature.tz_default.clone()),
            None => {
                w.push(Warning::warn(Stage::Detect, codes::UNKNOWN_SOURCE, "no source signature matched"));
                (vec![CaseSegment::whole(&text)], None)
            }
        };
        self.log(&mut out, &doc.document_id, None, w);
        for seg in &segments {
            if seg.text.trim().is_empty() {
                let w = Warning::warn(Stage::Extract, codes::EMPTY_SEGMENT, format!("segment {} is empty", seg.segment_index));
                self.log(&mut out, &doc.document_id, None, vec![w]);
                continue;
            }
            out.segments += 1;
            let site = Site {
                doc,
                engine: extracted.engine_used,
                det: &det,
                tz: tz.as_deref(),
                seg,
            };
            // Unrecognized layouts go to the model alone when it is enabled.
            if self.config.paths_enabled.rule() && !(det.is_unknown() && self.config.paths_enabled.llm()) {
                self.rule_segment(&site, &mut out);
            }
            if self.config.paths_enabled.llm() {
                self.llm_segment(&site, &mut out);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub documents_in: usize,
    pub documents_failed: usize,
    pub segments: usize,
    pub records_out_rule: usize,
    pub records_out_llm: usize,
    pub withheld_llm: Vec<String>,
    pub warnings_by_severity: BTreeMap<String, usize>,
    pub runtime_s: BTreeMap<String, f64>,
    pub backend_calls: u64,
    pub geocode: GeocodeCounters,
    pub config_digest: String,
}

/// Keeps the first record per case id; later ones become warnings.
fn dedupe(records: Vec<CaseRecord>, sink: &WarningSink, ts: &str) -> Vec<CaseRecord> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in records {
        if seen.insert(r.case_id.clone()) {
            out.push(r);
        } else {
            let w = Warning::warn(
                Stage::Emit,
                codes::DUPLICATE_CASE_ID,
                format!("{} {} emitted once; later duplicate dropped", r.provenance.extraction_path.as_str(), r.case_id),
            );
            emit::log_warning(WarningLogEntry::from_warning(w, &r.provenance.document_id, Some(&r.case_id), ts), sink);
        }
    }
    emit::sort_records(&mut out);
    out
}

fn write_text(path: &Path, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn jsonl<T: Serialize>(rows: &[T]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("row serializes") + "\n")
        .collect()
}

/// Runs with resources and backend supplied by the caller.
pub fn run_with(config: &RunConfig, res: &Resources, backend: Option<Arc<dyn Backend>>) -> Result<RunSummary, RunError> {
    if !config.input_dir.is_dir() {
        return Err(RunError::Invalid(format!("input directory {} does not exist", config.input_dir.display())));
    }
    std::fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;
    let docs = list_documents(&config.input_dir)?;
    let counting = match (config.paths_enabled.llm(), backend) {
        (true, Some(b)) => Some(CountingBackend::new(b)),
        (true, None) => Some(CountingBackend::new(make_backend(config, &docs)?)),
        (false, _) => None,
    };
    let extractor = TextExtractor::default();
    let gate = Gate::new(config.max_in_flight);
    let ctx = Ctx {
        config,
        res,
        extractor: &extractor,
        backend: counting.as_ref().map(|c| c as &dyn Backend),
        gate: &gate,
    };
    let outputs = map_documents(&docs, config.workers, |d| ctx.document(d));

    let sink = WarningSink::new();
    let ts = ctx.ts().to_string();
    let (mut rule, mut llm, mut withheld, mut repair_log, mut runtimes) = (vec![], vec![], vec![], vec![], vec![]);
    let (mut segments, mut failed) = (0, 0);
    for o in outputs {
        segments += o.segments;
        failed += usize::from(o.failed);
        for w in o.warnings {
            emit::log_warning(w, &sink);
        }
        rule.extend(o.rule);
        llm.extend(o.llm);
        withheld.extend(o.withheld);
        repair_log.extend(o.repair_log);
        runtimes.extend(o.runtimes);
    }
    let rule = dedupe(rule, &sink, &ts);
    let llm = dedupe(llm, &sink, &ts);
    let out = &config.output_dir;
    if config.paths_enabled.rule() {
        emit::write_jsonl(&rule, &out.join("cases_rule.jsonl"))?;
        emit::write_csv(&rule, &res.schema, &out.join("cases_rule.csv"))?;
    }
    if config.paths_enabled.llm() {
        emit::write_jsonl(&llm, &out.join("cases_llm.jsonl"))?;
        emit::write_csv(&llm, &res.schema, &out.join("cases_llm.csv"))?;
        write_text(&out.join("repair_log.jsonl"), &jsonl(&repair_log))?;
    }
    sink.write(&out.join("warnings.jsonl"))?;
    write_text(&out.join("engine_calls.jsonl"), &extractor.call_log().to_jsonl())?;
    write_text(&out.join("runtimes.jsonl"), &jsonl(&runtimes))?;
    res.geocoder.cache.save().map_err(|e| RunError::Io {
        path: config.cache_path.clone().unwrap_or_default(),
        source: e,
    })?;

    let mut runtime_s = BTreeMap::new();
    for s in &runtimes {
        *runtime_s.entry(s.path.as_str().to_string()).or_insert(0.0) += s.seconds;
    }
    let summary = RunSummary {
        documents_in: docs.len(),
        documents_failed: failed,
        segments,
        records_out_rule: rule.len(),
        records_out_llm: llm.len(),
        withheld_llm: withheld,
        warnings_by_severity: sink.count_by_severity(),
        runtime_s,
        backend_calls: counting.as_ref().map_or(0, CountingBackend::calls),
        geocode: res.geocoder.counters(),
        config_digest: config.digest(),
    };
    write_text(
        &out.join("run_summary.json"),
        &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
    )?;
    Ok(summary)
}

pub fn run(config: &RunConfig) -> Result<RunSummary, RunError> {
    let res = Resources::load(config)?;
    run_with(config, &res, None)
}

fn read_jsonl_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, RunError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| RunError::Invalid(format!("{}: {e}", path.display()))))
        .collect()
}

/// Scores each emitted path against the gold file and writes
/// `eval_<path>.json` plus `comparison.txt`.
pub fn evaluate(config: &RunConfig, schema: &SchemaDefinition) -> Result<Vec<MetricsReport>, RunError> {
    let gold_path = config
        .gold_path
        .as_ref()
        .ok_or_else(|| RunError::Invalid("evaluation needs a gold file".into()))?;
    if !gold_path.exists() {
        return Err(RunError::Invalid(format!("gold file {} does not exist", gold_path.display())));
    }
    let gold = emit::read_jsonl(gold_path)?;
    let out = &config.output_dir;
    let runtimes: Vec<RuntimeSample> = read_jsonl_rows(&out.join("runtimes.jsonl"))?;
    let repair_log: Vec<RepairLogEntry> = read_jsonl_rows(&out.join("repair_log.jsonl"))?;
    let mut reports = Vec::new();
    for path in [ExtractionPath::Rule, ExtractionPath::Llm] {
        let file = out.join(format!("cases_{}.jsonl", path.as_str()));
        if !file.exists() {
            continue;
        }
        let parsed = emit::read_jsonl(&file)?;
        let samples: Vec<f64> = runtimes.iter().filter(|s| s.path == path).map(|s| s.seconds).collect();
        let report = eval::evaluate(&EvalInput {
            path: path.as_str(),
            parsed: &parsed,
            gold: &gold,
            repair_log: (path == ExtractionPath::Llm).then_some(repair_log.as_slice()),
            runtimes_s: &samples,
            schema,
            key_fields: &eval::DEFAULT_KEY_FIELDS,
            config_digest: config.digest(),
        })?;
        write_text(
            &out.join(format!("eval_{}.json", path.as_str())),
            &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
        )?;
        reports.push(report);
    }
    write_text(&out.join("comparison.txt"), &eval::comparison_table(&reports))?;
    Ok(reports)
}
