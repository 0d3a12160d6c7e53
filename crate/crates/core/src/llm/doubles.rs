//! Deterministic backends for tests, benches, and offline evaluation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, BackendRequest, Prompt};
use crate::schema::path::{remove_path, resolve_path_mut, set_path};
use crate::schema::{CaseRecord, ViolationCode};

/// Fields the pipeline derives itself; a backend never supplies them.
pub const DERIVED_PATHS: [&str; 5] = [
    "spatial.lat",
    "spatial.lon",
    "spatial.geocode_method",
    "spatial.geocode_plausible",
    "provenance",
];

pub fn strip_derived(record: &CaseRecord) -> Value {
    let mut v = record.to_value();
    for p in DERIVED_PATHS {
        remove_path(&mut v, p);
    }
    v
}

fn fenced(v: &Value) -> String {
    format!("```json\n{}\n```", serde_json::to_string_pretty(v).expect("json value serializes"))
}

/// Replays a fixed queue of responses, optionally after a fixed delay.
pub struct Scripted {
    responses: Mutex<VecDeque<Result<String, BackendError>>>,
    delay: Duration,
    calls: AtomicUsize,
}

impl Scripted {
    pub fn new(responses: Vec<Result<String, BackendError>>) -> Self {
        Scripted {
            responses: Mutex::new(responses.into()),
            delay: Duration::ZERO,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for Scripted {
    fn label(&self) -> &str {
        "scripted"
    }

    fn complete(&self, _request: &BackendRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        std::thread::sleep(self.delay);
        self.responses
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .pop_front()
            .unwrap_or(Err(BackendError::Empty))
    }
}

/// Answers extraction prompts with the gold record of the case whose id
/// appears in the document text. Repair prompts get the record back as is.
pub struct Oracle {
    gold: BTreeMap<String, Value>,
    calls: AtomicUsize,
}

impl Oracle {
    pub fn new(gold: &[CaseRecord]) -> Self {
        Oracle {
            gold: gold.iter().map(|r| (r.case_id.clone(), strip_derived(r))).collect(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Longest case id contained in `text`.
    pub fn match_case(&self, text: &str) -> Option<(&str, &Value)> {
        self.gold
            .iter()
            .filter(|(id, _)| text.contains(id.as_str()))
            .max_by_key(|(id, _)| id.len())
            .map(|(id, v)| (id.as_str(), v))
    }

    fn answer(&self, request: &BackendRequest) -> Option<(String, Value)> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match &request.prompt {
            Prompt::Extract(p) => self.match_case(&p.document_text).map(|(id, v)| (id.to_string(), v.clone())),
            Prompt::Repair(_) => None,
        }
    }
}

impl Backend for Oracle {
    fn label(&self) -> &str {
        "oracle"
    }

    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        match &request.prompt {
            Prompt::Repair(p) => Ok(p.current_record_text.clone()),
            Prompt::Extract(_) => Ok(self.answer(request).map(|(_, v)| fenced(&v)).unwrap_or_else(|| "{}".into())),
        }
    }
}

fn case_rng(seed: u64, case_id: &str) -> ChaCha8Rng {
    let digest = Sha256::new().chain_update(seed.to_le_bytes()).chain_update(case_id.as_bytes()).finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(bytes)
}

fn leaf_paths(v: &Value, prefix: &str, out: &mut Vec<String>) {
    match v {
        Value::Object(m) => {
            for (k, c) in m {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                leaf_paths(c, &p, out);
            }
        }
        Value::Null => {}
        Value::Array(a) if a.is_empty() => {}
        _ => out.push(prefix.to_string()),
    }
}

/// An oracle that omits each non-null field with probability `p`. The case
/// id is always kept so records stay aligned with gold.
pub struct DropoutOracle {
    oracle: Oracle,
    p: f64,
    seed: u64,
}

impl DropoutOracle {
    pub fn new(gold: &[CaseRecord], p: f64, seed: u64) -> Self {
        DropoutOracle {
            oracle: Oracle::new(gold),
            p,
            seed,
        }
    }
}

impl Backend for DropoutOracle {
    fn label(&self) -> &str {
        "dropout_oracle"
    }

    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        if let Prompt::Repair(p) = &request.prompt {
            return Ok(p.current_record_text.clone());
        }
        let Some((id, mut v)) = self.oracle.answer(request) else {
            return Ok("{}".into());
        };
        let mut rng = case_rng(self.seed, &id);
        let mut paths = Vec::new();
        leaf_paths(&v, "", &mut paths);
        for p in paths.iter().filter(|p| p.as_str() != "case_id") {
            if rng.gen::<f64>() < self.p {
                remove_path(&mut v, p);
            }
        }
        Ok(fenced(&v))
    }
}

/// Sorted-index selection of `floor(n * rate)` cases, spread evenly.
pub fn select_by_rate(ids: &[String], rate: f64) -> BTreeSet<String> {
    let mut sorted: Vec<&String> = ids.iter().collect();
    sorted.sort();
    sorted
        .into_iter()
        .enumerate()
        .filter(|(i, _)| ((*i + 1) as f64 * rate).floor() > (*i as f64 * rate).floor())
        .map(|(_, id)| id.clone())
        .collect()
}

/// Schema-violating edits applied in rotation to selected cases.
fn corrupt(v: &mut Value, n: usize) {
    let (path, bad) = match n % 3 {
        0 => ("demographic.age_years", Value::from(430)),
        1 => ("spatial.postal_code", Value::from("0000X")),
        _ => ("demographic.height_max_cm", Value::from(999)),
    };
    set_path(v, path, bad);
}

/// Nulls exactly the cited fields: unknown keys are removed, missing
/// sections become empty objects, and bad list items are dropped.
pub fn minimal_fix(record_text: &str, violation_messages: &[String]) -> String {
    let Ok(mut v) = serde_json::from_str::<Value>(record_text) else {
        return record_text.to_string();
    };
    let mut list_items: Vec<(String, usize)> = Vec::new();
    for msg in violation_messages {
        let mut parts = msg.splitn(3, ": ");
        let (Some(path), Some(code)) = (parts.next(), parts.next()) else {
            continue;
        };
        let is_section = !path.contains('.') && path != "case_id";
        match code {
            c if c == ViolationCode::UnknownKey.as_str() => {
                remove_path(&mut v, path);
            }
            c if c == ViolationCode::MissingRequired.as_str() && is_section => {
                set_path(&mut v, path, Value::Object(Default::default()));
            }
            _ => match path.rsplit_once('.') {
                Some((base, idx)) if idx.parse::<usize>().is_ok() => {
                    list_items.push((base.to_string(), idx.parse().unwrap_or(0)));
                }
                _ => {
                    set_path(&mut v, path, Value::Null);
                }
            },
        }
    }
    list_items.sort_by_key(|item| std::cmp::Reverse(item.1));
    for (base, idx) in list_items {
        if let Some(Value::Array(a)) = resolve_path_mut(&mut v, &base) {
            if idx < a.len() {
                a.remove(idx);
            }
        }
    }
    v.to_string()
}

/// Returns invalid candidates for a rate-selected subset of cases, then
/// repairs them minimally when asked.
pub struct InvalidThenFix {
    oracle: Oracle,
    corrupted: BTreeMap<String, usize>,
    fixes: bool,
}

impl InvalidThenFix {
    pub fn new(gold: &[CaseRecord], rate: f64) -> Self {
        Self::build(gold, rate, true)
    }

    fn build(gold: &[CaseRecord], rate: f64, fixes: bool) -> Self {
        let ids: Vec<String> = gold.iter().map(|r| r.case_id.clone()).collect();
        InvalidThenFix {
            oracle: Oracle::new(gold),
            corrupted: select_by_rate(&ids, rate).into_iter().enumerate().map(|(i, id)| (id, i)).collect(),
            fixes,
        }
    }

    pub fn corrupted(&self) -> impl Iterator<Item = &str> {
        self.corrupted.keys().map(String::as_str)
    }
}

impl Backend for InvalidThenFix {
    fn label(&self) -> &str {
        if self.fixes {
            "invalid_then_fix"
        } else {
            "never_fix"
        }
    }

    fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        match &request.prompt {
            Prompt::Repair(p) if self.fixes => Ok(minimal_fix(&p.current_record_text, &p.violation_messages)),
            Prompt::Repair(p) => Ok(p.current_record_text.clone()),
            Prompt::Extract(_) => {
                let Some((id, mut v)) = self.oracle.answer(request) else {
                    return Ok("{}".into());
                };
                if let Some(n) = self.corrupted.get(&id) {
                    corrupt(&mut v, *n);
                }
                Ok(fenced(&v))
            }
        }
    }
}

/// Like [`InvalidThenFix`] but repair responses never change anything.
pub struct NeverFix;

impl NeverFix {
    #[allow(clippy::new_ret_no_self)]
    pub fn new(gold: &[CaseRecord], rate: f64) -> InvalidThenFix {
        InvalidThenFix::build(gold, rate, false)
    }
}
