//! Text acquisition: engine cascade with OCR fallback, pre-normalization, and
//! case splitting.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::schema::Engine;

/// Everything after this line is a machine-readable trailer, never document
/// content. Parsers never see it.
pub const END_OF_DOCUMENT_SENTINEL: &str = "=== END OF DOCUMENT ===";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentKind {
    Pdf,
    Plaintext,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub document_id: String,
    pub path: PathBuf,
    pub declared_kind: DocumentKind,
}

impl RawDocument {
    /// Document id is the file stem; `.pdf` files are PDFs, anything else is
    /// read as plain text.
    pub fn from_path(path: &Path) -> Option<RawDocument> {
        let document_id = path.file_stem()?.to_str()?.to_string();
        if document_id.is_empty() {
            return None;
        }
        let is_pdf = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pdf"));
        Some(RawDocument {
            document_id,
            path: path.to_path_buf(),
            declared_kind: if is_pdf {
                DocumentKind::Pdf
            } else {
                DocumentKind::Plaintext
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSpec {
    pub engine: Engine,
    /// Shell command with `{input}` and optional `{output}` placeholders.
    /// When `{output}` is absent the command's stdout is captured.
    #[serde(default)]
    pub command_template: Option<String>,
    pub timeout_s: f64,
}

impl EngineSpec {
    pub fn plaintext() -> Self {
        EngineSpec {
            engine: Engine::Plaintext,
            command_template: None,
            timeout_s: 10.0,
        }
    }

    pub fn command(engine: Engine, template: impl Into<String>, timeout_s: f64) -> Self {
        EngineSpec {
            engine,
            command_template: Some(template.into()),
            timeout_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityThresholds {
    pub min_chars: usize,
    pub min_alnum: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        QualityThresholds {
            min_chars: 64,
            min_alnum: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedText {
    pub text: String,
    pub engine_used: Engine,
    pub char_count: usize,
    pub alnum_ratio: f64,
    /// False when no engine met the thresholds and this is the best of the
    /// failing outputs.
    pub meets_quality: bool,
}

impl ExtractedText {
    pub fn measure(text: String, engine_used: Engine, thresholds: QualityThresholds) -> Self {
        let char_count = text.chars().count();
        let alnum = text.chars().filter(|c| c.is_alphanumeric()).count();
        let alnum_ratio = alnum as f64 / char_count.max(1) as f64;
        let meets_quality = char_count >= thresholds.min_chars && alnum_ratio >= thresholds.min_alnum;
        ExtractedText {
            text,
            engine_used,
            char_count,
            alnum_ratio,
            meets_quality,
        }
    }

    fn score(&self) -> usize {
        self.text.chars().filter(|c| c.is_alphanumeric()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("timed out after {0} ms")]
    Timeout(u128),
    #[error("exited with status {0}")]
    Failed(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("engine requires a command template")]
    NoCommand,
}

#[derive(Debug, thiserror::Error)]
pub enum ExtractionError {
    #[error("engine chain is empty")]
    EmptyChain,
    #[error("OCR engine must be last in the chain")]
    OcrNotLast,
    #[error("all engines failed for {document_id}: {}", format_causes(.causes))]
    AllEnginesFailed {
        document_id: String,
        causes: Vec<(Engine, EngineError)>,
    },
}

fn format_causes(causes: &[(Engine, EngineError)]) -> String {
    causes
        .iter()
        .map(|(e, err)| format!("{}: {err}", e.as_str()))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Runs one engine over one document.
pub trait EngineRunner: Send + Sync {
    fn run(&self, doc: &RawDocument, spec: &EngineSpec) -> Result<String, EngineError>;
}

/// Runs configured external commands; the plaintext engine reads the file.
#[derive(Debug, Default)]
pub struct CommandRunner;

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

impl EngineRunner for CommandRunner {
    fn run(&self, doc: &RawDocument, spec: &EngineSpec) -> Result<String, EngineError> {
        if spec.engine == Engine::Plaintext {
            let bytes = std::fs::read(&doc.path).map_err(|e| EngineError::Io(e.to_string()))?;
            return Ok(String::from_utf8_lossy(&bytes).into_owned());
        }
        let template = spec.command_template.as_deref().ok_or(EngineError::NoCommand)?;
        let out_path = std::env::temp_dir().join(format!(
            "casepipe-{}-{}.txt",
            std::process::id(),
            TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let uses_output = template.contains("{output}");
        let command = template
            .replace("{input}", &shell_quote(&doc.path.to_string_lossy()))
            .replace("{output}", &shell_quote(&out_path.to_string_lossy()));
        let result = run_with_timeout(&command, Duration::from_secs_f64(spec.timeout_s.max(0.001)));
        let text = match result {
            Ok(_) if uses_output => std::fs::read(&out_path)
                .map(|b| String::from_utf8_lossy(&b).into_owned())
                .map_err(|e| EngineError::Io(e.to_string())),
            Ok(stdout) => Ok(stdout),
            Err(e) => Err(e),
        };
        let _ = std::fs::remove_file(&out_path);
        text
    }
}

fn run_with_timeout(command: &str, timeout: Duration) -> Result<String, EngineError> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| EngineError::Io(e.to_string()))?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        buf
    });
    let start = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if start.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                // Grandchildren may still hold the pipe open; leave the reader detached.
                drop(reader);
                return Err(EngineError::Timeout(timeout.as_millis()));
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(EngineError::Io(e.to_string())),
        }
    };
    let bytes = reader.join().unwrap_or_default();
    if !status.success() {
        return Err(EngineError::Failed(status.to_string()));
    }
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineCall {
    pub document_id: String,
    pub engine: Engine,
    /// `accepted`, `below_quality`, or `error: <cause>`.
    pub outcome: String,
    pub millis: u64,
}

/// Append-only record of engine invocations, safe for concurrent appends.
#[derive(Debug, Default)]
pub struct CallLog {
    calls: Mutex<Vec<EngineCall>>,
}

impl CallLog {
    pub fn push(&self, call: EngineCall) {
        self.calls.lock().expect("call log poisoned").push(call);
    }

    pub fn snapshot(&self) -> Vec<EngineCall> {
        self.calls.lock().expect("call log poisoned").clone()
    }

    /// One JSON object per line, sorted by document id with per-document
    /// call order preserved.
    pub fn to_jsonl(&self) -> String {
        let mut calls = self.snapshot();
        calls.sort_by(|a, b| a.document_id.cmp(&b.document_id));
        calls
            .iter()
            .map(|c| serde_json::to_string(c).expect("call serializes") + "\n")
            .collect()
    }
}

pub struct TextExtractor<R: EngineRunner = CommandRunner> {
    runner: R,
    log: CallLog,
}

impl Default for TextExtractor<CommandRunner> {
    fn default() -> Self {
        TextExtractor::new(CommandRunner)
    }
}

impl<R: EngineRunner> TextExtractor<R> {
    pub fn new(runner: R) -> Self {
        TextExtractor {
            runner,
            log: CallLog::default(),
        }
    }

    pub fn call_log(&self) -> &CallLog {
        &self.log
    }

    /// Tries engines in order and returns the first output meeting both
    /// thresholds. Later engines are never invoked once one passes. When none
    /// passes, the highest-scoring output comes back with
    /// `meets_quality = false`.
    pub fn extract_text(
        &self,
        doc: &RawDocument,
        chain: &[EngineSpec],
        thresholds: QualityThresholds,
    ) -> Result<ExtractedText, ExtractionError> {
        if chain.is_empty() {
            return Err(ExtractionError::EmptyChain);
        }
        if let Some(pos) = chain.iter().position(|s| s.engine == Engine::Ocr) {
            if pos != chain.len() - 1 {
                return Err(ExtractionError::OcrNotLast);
            }
        }
        let mut best: Option<ExtractedText> = None;
        let mut causes = Vec::new();
        for spec in chain {
            let start = Instant::now();
            let result = self.runner.run(doc, spec);
            let millis = start.elapsed().as_millis() as u64;
            let outcome;
            match result {
                Ok(text) => {
                    let measured = ExtractedText::measure(text, spec.engine, thresholds);
                    if measured.meets_quality {
                        self.log.push(EngineCall {
                            document_id: doc.document_id.clone(),
                            engine: spec.engine,
                            outcome: "accepted".into(),
                            millis,
                        });
                        return Ok(measured);
                    }
                    outcome = "below_quality".to_string();
                    if best.as_ref().is_none_or(|b| measured.score() > b.score()) {
                        best = Some(measured);
                    }
                }
                Err(e) => {
                    outcome = format!("error: {e}");
                    causes.push((spec.engine, e));
                }
            }
            self.log.push(EngineCall {
                document_id: doc.document_id.clone(),
                engine: spec.engine,
                outcome,
                millis,
            });
        }
        best.ok_or_else(|| ExtractionError::AllEnginesFailed {
            document_id: doc.document_id.clone(),
            causes,
        })
    }
}

/// Drops the sentinel line and everything after it.
pub fn strip_trailer(text: &str) -> &str {
    match text.find(END_OF_DOCUMENT_SENTINEL) {
        Some(pos) => &text[..pos],
        None => text,
    }
}

/// Standardizes line endings, strips control characters, collapses
/// horizontal whitespace, trims each line, and collapses runs of three or
/// more blank lines to one. Idempotent.
pub fn prenormalize(text: &str) -> String {
    let unified = text.replace("\r\n", "\n").replace('\r', "\n");
    let mut lines: Vec<String> = Vec::new();
    for raw_line in unified.split('\n') {
        let mut line = String::with_capacity(raw_line.len());
        let mut pending_space = false;
        for c in raw_line.chars() {
            if c.is_whitespace() {
                pending_space = true;
            } else if c.is_control() {
                continue;
            } else {
                if pending_space && !line.is_empty() {
                    line.push(' ');
                }
                pending_space = false;
                line.push(c);
            }
        }
        lines.push(line);
    }
    let mut out: Vec<String> = Vec::with_capacity(lines.len());
    let mut i = 0;
    while i < lines.len() {
        if lines[i].is_empty() {
            let run = lines[i..].iter().take_while(|l| l.is_empty()).count();
            let keep = if run >= 3 { 1 } else { run };
            out.extend(std::iter::repeat_n(String::new(), keep));
            i += run;
        } else {
            out.push(std::mem::take(&mut lines[i]));
            i += 1;
        }
    }
    out.join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseSegment {
    pub segment_index: usize,
    pub text: String,
    /// Character offsets into the parent normalized text.
    pub char_start: usize,
    pub char_end: usize,
}

impl CaseSegment {
    pub fn whole(text: &str) -> CaseSegment {
        CaseSegment {
            segment_index: 0,
            text: text.to_string(),
            char_start: 0,
            char_end: text.chars().count(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid split pattern {pattern:?}: {source}")]
pub struct SplitPatternError {
    pub pattern: String,
    #[source]
    pub source: regex::Error,
}

pub fn compile_split_patterns(patterns: &[String]) -> Result<Vec<Regex>, SplitPatternError> {
    patterns
        .iter()
        .map(|p| {
            Regex::new(&format!("(?m){p}")).map_err(|source| SplitPatternError {
                pattern: p.clone(),
                source,
            })
        })
        .collect()
}

/// Splits at every header match. Text before the first header stays in
/// segment 0, so segments always tile the input exactly.
pub fn split_cases(text: &str, header_patterns: &[String]) -> Result<Vec<CaseSegment>, SplitPatternError> {
    let compiled = compile_split_patterns(header_patterns)?;
    Ok(split_cases_compiled(text, &compiled))
}

pub fn split_cases_compiled(text: &str, patterns: &[Regex]) -> Vec<CaseSegment> {
    let mut starts: Vec<usize> = patterns
        .iter()
        .flat_map(|re| re.find_iter(text).map(|m| m.start()))
        .collect();
    starts.sort_unstable();
    starts.dedup();
    // The first header opens segment 0, which also absorbs any preamble.
    let mut bounds = vec![0];
    bounds.extend(starts.into_iter().skip(1));
    bounds.push(text.len());
    let mut segments = Vec::with_capacity(bounds.len() - 1);
    let mut char_pos = 0;
    for (i, w) in bounds.windows(2).enumerate() {
        let slice = &text[w[0]..w[1]];
        let len = slice.chars().count();
        segments.push(CaseSegment {
            segment_index: i,
            text: slice.to_string(),
            char_start: char_pos,
            char_end: char_pos + len,
        });
        char_pos += len;
    }
    segments
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    struct Scripted(HashMap<Engine, Result<String, EngineError>>);

    impl EngineRunner for Scripted {
        fn run(&self, _doc: &RawDocument, spec: &EngineSpec) -> Result<String, EngineError> {
            self.0.get(&spec.engine).cloned().unwrap_or(Err(EngineError::NoCommand))
        }
    }

    fn doc() -> RawDocument {
        RawDocument {
            document_id: "d1".into(),
            path: "d1.pdf".into(),
            declared_kind: DocumentKind::Pdf,
        }
    }

    fn pdf_chain() -> Vec<EngineSpec> {
        vec![
            EngineSpec::command(Engine::Layout, "layout {input}", 5.0),
            EngineSpec::command(Engine::Basic, "basic {input}", 5.0),
            EngineSpec::command(Engine::Ocr, "ocr {input}", 5.0),
        ]
    }

    fn words(n: usize) -> String {
        "case text ".repeat(n / 10 + 1)[..n].to_string()
    }

    #[test]
    fn falls_through_empty_layout() {
        let runner = Scripted(HashMap::from([
            (Engine::Layout, Ok(String::new())),
            (Engine::Basic, Ok(words(900))),
            (Engine::Ocr, Ok(words(2000))),
        ]));
        let ex = TextExtractor::new(runner);
        let out = ex.extract_text(&doc(), &pdf_chain(), Default::default()).unwrap();
        assert_eq!(out.engine_used, Engine::Basic);
        assert_eq!(out.char_count, 900);
        let engines: Vec<_> = ex.call_log().snapshot().iter().map(|c| c.engine).collect();
        assert_eq!(engines, vec![Engine::Layout, Engine::Basic], "OCR never invoked");
    }

    #[test]
    fn ocr_for_image_pdfs() {
        let ocr_text = "a".repeat(1600) + &" ".repeat(400);
        let runner = Scripted(HashMap::from([
            (Engine::Layout, Ok("ab cd".into())),
            (Engine::Basic, Ok("ab cd".into())),
            (Engine::Ocr, Ok(ocr_text)),
        ]));
        let ex = TextExtractor::new(runner);
        let out = ex.extract_text(&doc(), &pdf_chain(), Default::default()).unwrap();
        assert_eq!(out.engine_used, Engine::Ocr);
        assert_eq!(out.char_count, 2000);
        assert!((out.alnum_ratio - 0.8).abs() < 1e-12);
    }

    #[test]
    fn best_failing_output_is_flagged() {
        let runner = Scripted(HashMap::from([
            (Engine::Layout, Ok("abc".into())),
            (Engine::Basic, Err(EngineError::Timeout(10))),
            (Engine::Ocr, Ok("abcdefg".into())),
        ]));
        let out = TextExtractor::new(runner)
            .extract_text(&doc(), &pdf_chain(), Default::default())
            .unwrap();
        assert!(!out.meets_quality);
        assert_eq!(out.engine_used, Engine::Ocr);
    }

    #[test]
    fn all_errors_is_failure() {
        let runner = Scripted(HashMap::from([
            (Engine::Layout, Err(EngineError::Failed("1".into()))),
            (Engine::Basic, Err(EngineError::Timeout(5))),
            (Engine::Ocr, Err(EngineError::Io("gone".into()))),
        ]));
        let err = TextExtractor::new(runner)
            .extract_text(&doc(), &pdf_chain(), Default::default())
            .unwrap_err();
        match err {
            ExtractionError::AllEnginesFailed { causes, .. } => assert_eq!(causes.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn chain_preconditions() {
        let ex = TextExtractor::new(Scripted(HashMap::new()));
        assert!(matches!(
            ex.extract_text(&doc(), &[], Default::default()),
            Err(ExtractionError::EmptyChain)
        ));
        let mut chain = pdf_chain();
        chain.swap(0, 2);
        assert!(matches!(
            ex.extract_text(&doc(), &chain, Default::default()),
            Err(ExtractionError::OcrNotLast)
        ));
    }

    #[test]
    fn plaintext_passthrough() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("case1.txt");
        let body = "Case Number: MP1\n".repeat(10);
        std::fs::write(&path, &body).unwrap();
        let doc = RawDocument::from_path(&path).unwrap();
        assert_eq!(doc.document_id, "case1");
        assert_eq!(doc.declared_kind, DocumentKind::Plaintext);
        let out = TextExtractor::default()
            .extract_text(&doc, &[EngineSpec::plaintext()], Default::default())
            .unwrap();
        assert_eq!(out.engine_used, Engine::Plaintext);
        assert_eq!(out.text, body);
    }

    #[test]
    fn command_engines_stdout_output_and_timeout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scan.pdf");
        std::fs::write(&path, "x").unwrap();
        let doc = RawDocument::from_path(&path).unwrap();
        let runner = CommandRunner;
        let stdout = EngineSpec::command(Engine::Layout, "printf 'from stdout'", 5.0);
        assert_eq!(runner.run(&doc, &stdout).unwrap(), "from stdout");
        let file = EngineSpec::command(Engine::Basic, "cat {input} > {output}; printf y >> {output}", 5.0);
        assert_eq!(runner.run(&doc, &file).unwrap(), "xy");
        let slow = EngineSpec::command(Engine::Ocr, "sleep 5", 0.1);
        assert!(matches!(runner.run(&doc, &slow), Err(EngineError::Timeout(_))));
        let failing = EngineSpec::command(Engine::Layout, "exit 3", 5.0);
        assert!(matches!(runner.run(&doc, &failing), Err(EngineError::Failed(_))));
    }

    #[test]
    fn prenormalize_rules() {
        assert_eq!(prenormalize("a\t\tb\r\nc"), "a b\nc");
        assert_eq!(prenormalize("x\u{0000}y"), "xy");
        assert_eq!(prenormalize("  lead  \rtrail  "), "lead\ntrail");
        assert_eq!(prenormalize("a\n\n\n\n\nb"), "a\n\nb");
        assert_eq!(prenormalize("a\n\n\nb"), "a\n\n\nb");
        let clean = "Name: Jane Doe\n\nCirculated text.";
        assert_eq!(prenormalize(clean), clean);
    }

    #[test]
    fn split_two_headers() {
        let text = "CASE #1\nName: A\nCASE #2\nName: B";
        let segs = split_cases(text, &["^CASE #".to_string()]).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!((segs[0].char_start, segs[0].char_end), (0, 16));
        assert_eq!((segs[1].char_start, segs[1].char_end), (16, 31));
        assert_eq!(segs[1].text, "CASE #2\nName: B");
    }

    #[test]
    fn split_degenerate() {
        let segs = split_cases("no headers here", &["^CASE #".to_string()]).unwrap();
        assert_eq!(segs, vec![CaseSegment::whole("no headers here")]);
        let segs = split_cases("", &["^CASE #".to_string()]).unwrap();
        assert_eq!(segs, vec![CaseSegment::whole("")]);
        assert!(split_cases("x", &["(".to_string()]).is_err());
    }

    #[test]
    fn preamble_stays_in_first_segment() {
        let text = "Bulletin\nCASE #1\nA\nCASE #2\nB";
        let segs = split_cases(text, &["^CASE #".to_string()]).unwrap();
        assert_eq!(segs.len(), 2);
        assert!(segs[0].text.starts_with("Bulletin"));
    }

    #[test]
    fn trailer_is_stripped() {
        let text = format!("body\n{END_OF_DOCUMENT_SENTINEL}\n#oracle {{}}\n");
        assert_eq!(strip_trailer(&text), "body\n");
    }

    fn messy_string() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                Just("\r\n"), Just("\r"), Just("\n"), Just("\t"), Just(" "), Just("\u{0}"),
                Just("\u{7}"), Just("\u{a0}"), Just("é"), Just("a"), Just("Z"), Just("9"), Just(":")
            ],
            0..80,
        )
        .prop_map(|parts| parts.concat())
    }

    proptest! {
        #[test]
        fn prenormalize_is_idempotent(s in messy_string()) {
            let once = prenormalize(&s);
            prop_assert_eq!(prenormalize(&once), once.clone());
            prop_assert!(!once.contains('\r'));
            prop_assert!(!once.chars().any(|c| c.is_control() && c != '\n'));
        }

        #[test]
        fn segments_tile_text(s in "(CASE #[0-9]\n)?[a-z \n]{0,20}(CASE #[0-9]\n[a-zé \n]{0,20}){0,3}") {
            let segs = split_cases(&s, &["^CASE #".to_string()]).unwrap();
            let joined: String = segs.iter().map(|g| g.text.as_str()).collect();
            prop_assert_eq!(joined, s.clone());
            for w in segs.windows(2) {
                prop_assert_eq!(w[0].char_end, w[1].char_start);
            }
            prop_assert_eq!(segs.last().unwrap().char_end, s.chars().count());
        }
    }
}
