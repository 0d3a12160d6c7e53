//! Schema-guided extraction through a pluggable text-generation backend,
//! with validator-guided repair.

pub mod doubles;
pub mod wire;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::schema::{
    path::{remove_path, set_path},
    resolve_path, validate, SchemaDefinition, ValidationReport, ValueKind,
};
use crate::warning::{codes, Severity, Stage, Warning};

pub const DEFAULT_BUDGET_CHARS: usize = 24_000;
pub const DEFAULT_MAX_REPAIR_ATTEMPTS: u32 = 2;

pub const DEFAULT_PRIORITY_HEADERS: [&str; 5] = [
    "Circumstances of Disappearance",
    "Details of Disappearance",
    "DETAILS:",
    "Last Known Location",
    "Missing From:",
];

const EXTRACT_INSTRUCTION: &str = "Read the case document below and return exactly one JSON object that \
conforms to the schema. Use only keys defined in the schema. Record only facts the document states; \
use null for anything it does not state. Do not add commentary.";

const REPAIR_INSTRUCTION: &str = "The JSON record below failed validation. Return the corrected record as \
one JSON object. Change only the fields named in the errors, with the smallest edit that satisfies the \
schema: re-type a value, or set it to null. Do not add new facts and do not touch any other field.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionPrompt {
    pub instruction: String,
    pub schema_text: String,
    pub document_text: String,
    pub max_output_hint: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairPrompt {
    pub current_record_text: String,
    pub violation_messages: Vec<String>,
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prompt {
    Extract(ExtractionPrompt),
    Repair(RepairPrompt),
}

impl Prompt {
    pub fn render(&self) -> String {
        match self {
            Prompt::Extract(p) => format!(
                "{}\nRespond with at most {} characters.\n\nSCHEMA\n{}\nDOCUMENT\n{}\n",
                p.instruction, p.max_output_hint, p.schema_text, p.document_text
            ),
            Prompt::Repair(p) => format!(
                "{}\n\nERRORS\n{}\n\nRECORD\n{}\n",
                p.instruction,
                p.violation_messages.join("\n"),
                p.current_record_text
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Extract,
    Repair,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Extract => "extract",
            Tier::Repair => "repair",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub prompt: Prompt,
    pub tier: Tier,
    pub timeout_s: f64,
    pub request_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub text: String,
    pub latency_ms: u64,
    pub backend_label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend returned an empty response")]
    Empty,
}

/// A text-generation service. Implementations must be callable from many
/// workers at once.
pub trait Backend: Send + Sync {
    fn label(&self) -> &str;
    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: 2,
            base_delay: Duration::from_millis(200),
        }
    }
}

/// Sends one request, retrying transport failures with exponential backoff.
pub fn call_backend(
    request: &BackendRequest,
    backend: &dyn Backend,
    retry: RetryPolicy,
) -> Result<BackendResponse, BackendError> {
    let mut attempt = 0;
    loop {
        let start = Instant::now();
        match backend.complete(request) {
            Ok(text) if text.trim().is_empty() => return Err(BackendError::Empty),
            Ok(text) => {
                return Ok(BackendResponse {
                    text,
                    latency_ms: start.elapsed().as_millis() as u64,
                    backend_label: backend.label().to_string(),
                })
            }
            Err(BackendError::Transport(_)) if attempt < retry.retries => {
                std::thread::sleep(retry.base_delay * 2u32.pow(attempt));
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Keeps blocks under priority headers first, then a head prefix of the
/// rest, never exceeding `budget_chars`.
pub fn truncate_for_budget(text: &str, budget_chars: usize, priority_headers: &[&str]) -> String {
    if text.chars().count() <= budget_chars {
        return text.to_string();
    }
    let lines: Vec<&str> = text.split('\n').collect();
    let mut in_priority = vec![false; lines.len()];
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i].trim_start();
        let is_header = priority_headers
            .iter()
            .any(|h| line.get(..h.len()).is_some_and(|p| p.eq_ignore_ascii_case(h)));
        if is_header {
            while i < lines.len() && !lines[i].trim().is_empty() {
                in_priority[i] = true;
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    let pick = |want: bool| -> String {
        lines
            .iter()
            .zip(&in_priority)
            .filter(|(_, p)| **p == want)
            .map(|(l, _)| *l)
            .collect::<Vec<_>>()
            .join("\n")
    };
    let priority = pick(true);
    let rest = pick(false);
    let mut out = String::new();
    if !priority.is_empty() {
        out.push_str(&priority);
        out.push('\n');
    }
    out.push_str(&rest);
    out.chars().take(budget_chars).collect()
}

pub fn build_extraction_prompt(
    text: &str,
    schema: &SchemaDefinition,
    budget_chars: usize,
    priority_headers: &[&str],
) -> ExtractionPrompt {
    ExtractionPrompt {
        instruction: EXTRACT_INSTRUCTION.to_string(),
        schema_text: schema.to_text(),
        document_text: truncate_for_budget(text, budget_chars, priority_headers),
        max_output_hint: 4096,
    }
}

pub fn build_repair_prompt(candidate: &Value, report: &ValidationReport) -> RepairPrompt {
    RepairPrompt {
        current_record_text: serde_json::to_string(candidate).expect("json value serializes"),
        violation_messages: report.messages(),
        instruction: REPAIR_INSTRUCTION.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no JSON object found in backend response")]
pub struct CandidateParseError;

/// First well-formed top-level object in `text`, ignoring surrounding prose
/// and code fences.
pub fn first_json_object(text: &str) -> Option<Map<String, Value>> {
    text.match_indices('{').find_map(|(i, _)| {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(m))) => Some(m),
            _ => None,
        }
    })
}

/// Extracts the candidate object, drops keys the schema does not define,
/// and turns numeric strings in numeric positions into numbers.
pub fn sanitize_candidate(
    response_text: &str,
    schema: &SchemaDefinition,
) -> Result<(Value, Vec<Warning>), CandidateParseError> {
    let object = first_json_object(response_text).ok_or(CandidateParseError)?;
    let mut warnings = Vec::new();
    let value = clean(Value::Object(object), "", schema, &mut warnings);
    Ok((value, warnings))
}

fn clean(value: Value, path: &str, schema: &SchemaDefinition, warnings: &mut Vec<Warning>) -> Value {
    let kind = if path.is_empty() {
        Some(ValueKind::Section)
    } else {
        schema.entry(path).map(|e| e.value_kind)
    };
    match (kind, value) {
        (Some(ValueKind::Section), Value::Object(m)) => {
            let mut out = Map::new();
            for (k, v) in m {
                let child = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                if schema.entry(&child).is_none() {
                    warnings.push(Warning::warn(
                        Stage::Sanitize,
                        codes::DROPPED_KEY,
                        format!("dropped key {child} not in schema"),
                    ));
                    continue;
                }
                out.insert(k, clean(v, &child, schema, warnings));
            }
            Value::Object(out)
        }
        (Some(ValueKind::Integer), Value::String(s)) => match s.trim().parse::<i64>() {
            Ok(n) => Value::from(n),
            Err(_) => Value::String(s),
        },
        (Some(ValueKind::Decimal), Value::String(s)) => match s.trim().parse::<f64>() {
            Ok(f) if f.is_finite() => Value::from(f),
            _ => Value::String(s),
        },
        (_, v) => v,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub record: Value,
    pub attempts: u32,
    pub passed: bool,
    pub pre_valid: bool,
    /// Paths whose out-of-scope changes were undone, per attempt.
    pub reverted: Vec<String>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone)]
pub struct RepairContext {
    pub request_prefix: String,
    pub timeout_s: f64,
    pub retry: RetryPolicy,
}

impl Default for RepairContext {
    fn default() -> Self {
        RepairContext {
            request_prefix: "repair".into(),
            timeout_s: 60.0,
            retry: RetryPolicy::default(),
        }
    }
}

/// A cited list item stands for its whole list, since items are positional.
fn edit_scope(cited: &[&str], schema: &SchemaDefinition) -> Vec<String> {
    let mut scope: Vec<String> = cited
        .iter()
        .map(|p| match p.rsplit_once('.') {
            Some((base, idx))
                if idx.parse::<usize>().is_ok()
                    && schema.entry(base).is_some_and(|e| e.value_kind == ValueKind::List) =>
            {
                base.to_string()
            }
            _ => p.to_string(),
        })
        .collect();
    scope.sort();
    scope.dedup();
    scope
}

fn leaves(v: &Value, prefix: &str, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(m) if !m.is_empty() => {
            for (k, c) in m {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                leaves(c, &p, out);
            }
        }
        _ => out.push((prefix.to_string(), v.clone())),
    }
}

fn within(path: &str, scope: &[String]) -> bool {
    scope
        .iter()
        .any(|s| path == s || path.starts_with(&format!("{s}.")) || s.starts_with(&format!("{path}.")))
}

/// Takes the proposed values at scoped paths and keeps everything else from
/// `before`. Returns the merged value and the paths that were reverted.
pub fn apply_scoped_edit(before: &Value, proposed: &Value, scope: &[String]) -> (Value, Vec<String>) {
    let mut merged = before.clone();
    for p in scope {
        match resolve_path(proposed, p).ok().flatten() {
            Some(v) => {
                set_path(&mut merged, p, v.clone());
            }
            None => {
                remove_path(&mut merged, p);
            }
        }
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    leaves(proposed, "", &mut a);
    leaves(&merged, "", &mut b);
    let merged_map: std::collections::BTreeMap<_, _> = b.into_iter().collect();
    let mut reverted: Vec<String> = a
        .into_iter()
        .filter(|(p, v)| !within(p, scope) && merged_map.get(p) != Some(v))
        .map(|(p, _)| p)
        .collect();
    reverted.sort();
    (merged, reverted)
}

/// Validates, then asks the repair tier for minimal fixes until the
/// candidate is clean or `max_attempts` is spent. Only violation-cited paths
/// may change between iterations.
pub fn repair_loop(
    candidate: Value,
    schema: &SchemaDefinition,
    backend: &dyn Backend,
    max_attempts: u32,
    ctx: &RepairContext,
) -> RepairOutcome {
    let mut current = candidate;
    let mut report = validate(&current, schema);
    let pre_valid = report.valid;
    let mut out = RepairOutcome {
        record: Value::Null,
        attempts: 0,
        passed: report.valid,
        pre_valid,
        reverted: Vec::new(),
        warnings: Vec::new(),
    };
    while !report.valid && out.attempts < max_attempts.max(1) {
        out.attempts += 1;
        let request = BackendRequest {
            prompt: Prompt::Repair(build_repair_prompt(&current, &report)),
            tier: Tier::Repair,
            timeout_s: ctx.timeout_s,
            request_id: format!("{}:{}", ctx.request_prefix, out.attempts),
        };
        let response = match call_backend(&request, backend, ctx.retry) {
            Ok(r) => r,
            Err(e) => {
                out.warnings.push(Warning::warn(
                    Stage::Repair,
                    codes::REPAIR_ATTEMPT_FAILED,
                    format!("attempt {}: {e}", out.attempts),
                ));
                continue;
            }
        };
        let proposed = match sanitize_candidate(&response.text, schema) {
            Ok((v, w)) => {
                out.warnings.extend(w);
                v
            }
            Err(e) => {
                out.warnings.push(Warning::warn(
                    Stage::Repair,
                    codes::REPAIR_ATTEMPT_FAILED,
                    format!("attempt {}: {e}", out.attempts),
                ));
                continue;
            }
        };
        let scope = edit_scope(&report.cited_paths(), schema);
        let (merged, reverted) = apply_scoped_edit(&current, &proposed, &scope);
        if !reverted.is_empty() {
            out.warnings.push(Warning::warn(
                Stage::Repair,
                codes::REPAIR_REVERTED,
                format!("attempt {}: reverted uncited edits at {}", out.attempts, reverted.join(", ")),
            ));
            out.reverted.extend(reverted);
        }
        current = merged;
        report = validate(&current, schema);
    }
    out.passed = report.valid;
    if !out.passed {
        out.warnings.push(Warning::new(
            Stage::Repair,
            Severity::Error,
            codes::REPAIR_EXHAUSTED,
            format!(
                "still invalid after {} attempt(s): {}",
                out.attempts,
                report.messages().join("; ")
            ),
        ));
    }
    out.record = current;
    out
}

#[cfg(test)]
mod tests {
    use super::doubles::Scripted;
    use super::*;
    use crate::schema::{default_schema, CaseRecord};
    use serde_json::json;

    fn valid_candidate() -> Value {
        let mut r = CaseRecord::empty("MP1");
        r.provenance.source_label = "src".into();
        r.to_value()
    }

    fn fast() -> RepairContext {
        RepairContext {
            retry: RetryPolicy {
                retries: 2,
                base_delay: Duration::ZERO,
            },
            ..Default::default()
        }
    }

    #[test]
    fn truncation() {
        let t = "x".repeat(100);
        assert_eq!(truncate_for_budget(&t, 500, &[]), t);
        assert_eq!(truncate_for_budget("abcdefghijKLM", 10, &[]), "abcdefghij");
        let doc = format!(
            "{}\n\nCircumstances of Disappearance\nShe left on foot.\n\nTail",
            "head line\n".repeat(50)
        );
        let out = truncate_for_budget(&doc, 80, &DEFAULT_PRIORITY_HEADERS);
        assert!(out.starts_with("Circumstances of Disappearance\nShe left on foot."));
        assert!(out.chars().count() <= 80);
    }

    #[test]
    fn prompt_contents() {
        let schema = default_schema();
        let p = build_extraction_prompt("Case Number: MP1", &schema, 10, &[]);
        assert_eq!(p.document_text, "Case Numbe");
        assert_eq!(p.schema_text, schema.to_text());
        assert!(p.instruction.contains("only keys defined in the schema"));
        assert!(build_extraction_prompt("", &schema, 10, &[]).document_text.is_empty());
        let rendered = Prompt::Extract(p).render();
        assert!(rendered.contains("\"field_path\":\"spatial.lat\""));
    }

    #[test]
    fn sanitize_wrappers_and_drops() {
        let schema = default_schema();
        let (v, w) = sanitize_candidate("Here is the record: {\"case_id\":\"A\"} thanks", &schema).unwrap();
        assert_eq!(v, json!({"case_id": "A"}));
        assert!(w.is_empty());
        let (v, w) = sanitize_candidate(
            "```json\n{\"case_id\":\"A\",\"zodiac_sign\":\"leo\",\"demographic\":{\"age_years\":\"15\",\"height_min_cm\":\"tall\"},\"spatial\":{\"lat\":\"38.5\"}}\n```",
            &schema,
        )
        .unwrap();
        assert_eq!(
            v,
            json!({"case_id":"A","demographic":{"age_years":15,"height_min_cm":"tall"},"spatial":{"lat":38.5}})
        );
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].code, codes::DROPPED_KEY);
        assert!(sanitize_candidate("I cannot help", &schema).is_err());
        assert!(sanitize_candidate("{not json} [1,2]", &schema).is_err());
    }

    #[test]
    fn retries_then_transport_error() {
        let b = Scripted::new((0..5).map(|_| Err(BackendError::Transport("down".into()))).collect());
        let req = BackendRequest {
            prompt: Prompt::Extract(build_extraction_prompt("x", &default_schema(), 10, &[])),
            tier: Tier::Extract,
            timeout_s: 1.0,
            request_id: "r1".into(),
        };
        let policy = RetryPolicy {
            retries: 2,
            base_delay: Duration::ZERO,
        };
        assert!(matches!(call_backend(&req, &b, policy), Err(BackendError::Transport(_))));
        assert_eq!(b.calls(), 3);
        let timeout = Scripted::new(vec![Err(BackendError::Timeout)]);
        assert_eq!(call_backend(&req, &timeout, policy), Err(BackendError::Timeout));
        assert_eq!(timeout.calls(), 1);
        let empty = Scripted::new(vec![Ok("  ".into())]);
        assert_eq!(call_backend(&req, &empty, policy), Err(BackendError::Empty));
        let slow = Scripted::new(vec![Ok("{}".into())]).with_delay(Duration::from_millis(50));
        let r = call_backend(&req, &slow, policy).unwrap();
        assert!((50..200).contains(&r.latency_ms), "{}", r.latency_ms);
    }

    #[test]
    fn repair_not_triggered_when_valid() {
        let b = Scripted::new(vec![]);
        let out = repair_loop(valid_candidate(), &default_schema(), &b, 2, &fast());
        assert_eq!((out.attempts, out.passed, out.pre_valid), (0, true, true));
        assert_eq!(b.calls(), 0);
    }

    #[test]
    fn repair_inserts_missing_section() {
        let mut c = valid_candidate();
        c.as_object_mut().unwrap().shift_remove("outcome");
        let mut fixed = c.clone();
        fixed["outcome"] = json!({"status": "unknown"});
        fixed["demographic"]["name"] = json!("Invented Name");
        let b = Scripted::new(vec![Ok(fixed.to_string())]);
        let out = repair_loop(c.clone(), &default_schema(), &b, 2, &fast());
        assert_eq!((out.attempts, out.passed, out.pre_valid), (1, true, false));
        assert_eq!(out.record["outcome"], json!({"status": "unknown"}));
        assert_eq!(out.record["demographic"]["name"], Value::Null);
        assert_eq!(out.reverted, ["demographic.name"]);
    }

    #[test]
    fn repair_exhaustion() {
        let mut c = valid_candidate();
        c["demographic"]["age_years"] = json!(430);
        let b = Scripted::new(vec![Ok(c.to_string()), Ok(c.to_string())]);
        let out = repair_loop(c, &default_schema(), &b, 2, &fast());
        assert_eq!((out.attempts, out.passed), (2, false));
        let last = out.warnings.last().unwrap();
        assert_eq!((last.code.as_str(), last.severity), (codes::REPAIR_EXHAUSTED, Severity::Error));
    }

    #[test]
    fn backend_failures_count_as_attempts() {
        let mut c = valid_candidate();
        c["demographic"]["age_years"] = json!(430);
        let b = Scripted::new(vec![Err(BackendError::Timeout), Ok("nope".into())]);
        let out = repair_loop(c, &default_schema(), &b, 2, &fast());
        assert_eq!((out.attempts, out.passed), (2, false));
        assert_eq!(
            out.warnings.iter().filter(|w| w.code == codes::REPAIR_ATTEMPT_FAILED).count(),
            2
        );
    }

    #[test]
    fn scoped_edit_on_list_item() {
        let schema = default_schema();
        let scope = edit_scope(&["narrative_osint.movement_cues.1"], &schema);
        assert_eq!(scope, ["narrative_osint.movement_cues"]);
        let before = json!({"narrative_osint": {"movement_cues": ["A", " "]}, "case_id": "x"});
        let proposed = json!({"narrative_osint": {"movement_cues": ["A"]}, "case_id": "y"});
        let (merged, reverted) = apply_scoped_edit(&before, &proposed, &scope);
        assert_eq!(merged, json!({"narrative_osint": {"movement_cues": ["A"]}, "case_id": "x"}));
        assert_eq!(reverted, ["case_id"]);
    }
}
