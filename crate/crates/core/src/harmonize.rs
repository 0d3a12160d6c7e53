//! Maps draft keys onto canonical schema paths and normalizes values.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use chrono::{NaiveDate, NaiveDateTime};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{read_json_lines, read_to_string, ConfigError};
use crate::rules::DraftRecord;
use crate::schema::{
    path::set_path, resolve_path, CaseRecord, FieldOrigin, IsoTimestamp, SchemaDefinition, ValueKind,
};
use crate::warning::{codes, Stage, Warning};

pub const ANY_SOURCE: &str = "*";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformId {
    None,
    Timestamp,
    Height,
    Weight,
    SexEnum,
    StatusEnum,
    PlaceParts,
    CueList,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyMapping {
    pub source_label: String,
    pub source_key: String,
    pub target_path: String,
    pub transform_id: TransformId,
}

#[derive(Debug, Clone, Default)]
pub struct MappingTable {
    map: BTreeMap<(String, String), KeyMapping>,
}

impl MappingTable {
    pub fn new(rows: Vec<KeyMapping>) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for m in rows {
            let key = (m.source_label.clone(), m.source_key.clone());
            if map.insert(key, m.clone()).is_some() {
                return Err(ConfigError::Invalid(format!(
                    "duplicate mapping for ({}, {})",
                    m.source_label, m.source_key
                )));
            }
        }
        Ok(MappingTable { map })
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        MappingTable::new(read_json_lines(text, "mappings")?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        MappingTable::from_text(&read_to_string(path)?)
    }

    /// Merges every `*.jsonl` file in `dir`, in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Self, ConfigError> {
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(|source| ConfigError::Io {
                path: dir.to_path_buf(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        let mut rows = Vec::new();
        for f in files {
            rows.extend(read_json_lines::<KeyMapping>(&read_to_string(&f)?, "mappings")?);
        }
        MappingTable::new(rows)
    }

    pub fn builtin() -> Self {
        MappingTable::from_text(crate::config::defaults::MAPPINGS).expect("bundled mappings")
    }

    /// One row per schema leaf outside provenance, keyed by its own path.
    pub fn identity(schema: &SchemaDefinition) -> Self {
        let rows = schema
            .entries()
            .iter()
            .filter(|e| schema.is_leaf(&e.field_path) && !e.field_path.starts_with("provenance."))
            .map(|e| KeyMapping {
                source_label: ANY_SOURCE.to_string(),
                source_key: e.field_path.clone(),
                target_path: e.field_path.clone(),
                transform_id: match (e.value_kind, e.field_path.as_str()) {
                    (ValueKind::Timestamp, _) => TransformId::Timestamp,
                    (ValueKind::List, _) => TransformId::CueList,
                    (_, "demographic.sex") => TransformId::SexEnum,
                    (_, "outcome.status") => TransformId::StatusEnum,
                    _ => TransformId::None,
                },
            })
            .collect();
        MappingTable::new(rows).expect("schema paths are unique")
    }

    /// Label-specific row first, then the wildcard row; list item keys
    /// (`path.N`) fall back to the row for `path`.
    pub fn lookup(&self, source_label: &str, source_key: &str) -> Option<&KeyMapping> {
        let find = |k: &str| {
            self.map
                .get(&(source_label.to_string(), k.to_string()))
                .or_else(|| self.map.get(&(ANY_SOURCE.to_string(), k.to_string())))
        };
        find(source_key).or_else(|| {
            let (base, idx) = source_key.rsplit_once('.')?;
            idx.parse::<usize>().ok()?;
            find(base)
        })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// One extracted key/value awaiting harmonization.
#[derive(Debug, Clone, PartialEq)]
pub struct DraftField {
    pub source_key: String,
    pub value: Value,
    pub origin: Option<FieldOrigin>,
}

pub fn draft_fields(draft: &DraftRecord) -> Vec<DraftField> {
    draft
        .candidates
        .values()
        .map(|c| DraftField {
            source_key: c.field_path.clone(),
            value: Value::String(c.raw_value.clone()),
            origin: Some(FieldOrigin {
                segment_index: draft.segment_index,
                char_start: c.char_start,
                char_end: c.char_end,
            }),
        })
        .collect()
}

/// Non-null leaves of a nested candidate; list items become `path.N`.
pub fn candidate_fields(candidate: &Value) -> Vec<DraftField> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<DraftField>) {
        match v {
            Value::Null => {}
            Value::Object(m) => {
                for (k, child) in m {
                    let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&p, child, out);
                }
            }
            Value::Array(items) => {
                for (i, child) in items.iter().enumerate() {
                    walk(&format!("{prefix}.{i}"), child, out);
                }
            }
            _ => out.push(DraftField {
                source_key: prefix.to_string(),
                value: v.clone(),
                origin: None,
            }),
        }
    }
    let mut out = Vec::new();
    walk("", candidate, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonizedRecord {
    pub record: CaseRecord,
    pub applied_transforms: Vec<(String, TransformId)>,
    pub dropped_fields: Vec<(String, String)>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Date,
    Datetime,
}

fn month_date_formats() -> &'static [&'static str] {
    &["%B %d, %Y", "%B %d %Y", "%b %d, %Y", "%b. %d, %Y", "%d %B %Y"]
}

/// ISO input passes through unchanged; `MM/DD/YYYY` and `Month D, YYYY`
/// forms become ISO dates. The clock is never shifted.
pub fn normalize_timestamp(raw: &str) -> Result<(String, Precision), String> {
    let s = raw.trim();
    if let Some(ts) = IsoTimestamp::parse(s) {
        let p = if ts.is_date_only() { Precision::Date } else { Precision::Datetime };
        return Ok((s.to_string(), p));
    }
    for f in ["%m/%d/%Y", "%m-%d-%Y"] {
        if let Ok(d) = NaiveDate::parse_from_str(s, f) {
            return Ok((d.format("%Y-%m-%d").to_string(), Precision::Date));
        }
    }
    for f in ["%m/%d/%Y %H:%M", "%m/%d/%Y %H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, f) {
            return Ok((dt.format("%Y-%m-%dT%H:%M:%S").to_string(), Precision::Datetime));
        }
    }
    for f in month_date_formats() {
        if let Ok(d) = NaiveDate::parse_from_str(s, f) {
            return Ok((d.format("%Y-%m-%d").to_string(), Precision::Date));
        }
    }
    Err(format!("unrecognized timestamp {s:?}"))
}

const HEIGHT_RANGE: (i64, i64) = (30, 250);
const WEIGHT_RANGE: (i64, i64) = (1, 400);

/// Parses a decimal into hundredths.
fn hundredths(s: &str) -> Option<i128> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.len() > 2 {
        let v: f64 = s.parse().ok()?;
        return Some((v * 100.0).round() as i128);
    }
    let int: i128 = int.parse().ok()?;
    let frac: i128 = if frac.is_empty() { 0 } else { format!("{frac:0<2}").parse().ok()? };
    Some(int * 100 + frac)
}

fn div_half_up(num: i128, den: i128) -> i64 {
    ((num + den / 2) / den) as i64
}

fn in_range(v: i64, (lo, hi): (i64, i64)) -> bool {
    (lo..=hi).contains(&v)
}

/// Feet/inch or centimetre heights, single or ranged, to whole cm.
pub fn normalize_height(raw: &str) -> Result<(i64, i64), String> {
    static TOKEN: OnceLock<Regex> = OnceLock::new();
    let token = TOKEN.get_or_init(|| {
        Regex::new(
            r#"(?i)(\d+)\s*(?:'|ft\.?|feet|foot)\s*(?:(\d+(?:\.\d+)?)\s*(?:"|''|in\.?|inches)?)?|(\d+(?:\.\d+)?)\s*(?:"|in\.?\b|inches)|(\d+(?:\.\d+)?)\s*cm\b"#,
        )
        .expect("static pattern")
    });
    let mut values = Vec::new();
    for c in token.captures_iter(raw) {
        let cm = if let Some(feet) = c.get(1) {
            let feet = hundredths(feet.as_str()).ok_or("bad feet")?;
            let inches = c.get(2).map_or(Some(0), |m| hundredths(m.as_str())).ok_or("bad inches")?;
            div_half_up((feet * 12 + inches) * 254, 10_000)
        } else if let Some(inches) = c.get(3) {
            div_half_up(hundredths(inches.as_str()).ok_or("bad inches")? * 254, 10_000)
        } else {
            div_half_up(hundredths(&c[4]).ok_or("bad cm")?, 100)
        };
        values.push(cm);
    }
    let (min, max) = match values[..] {
        [v] => (v, v),
        [a, b] => (a, b),
        _ => return Err(format!("unparseable height {raw:?}")),
    };
    if !in_range(min, HEIGHT_RANGE) || !in_range(max, HEIGHT_RANGE) {
        return Err(format!("implausible height {raw:?}"));
    }
    Ok((min, max))
}

/// Pound or kilogram weights, single or ranged, to whole kg.
pub fn normalize_weight(raw: &str) -> Result<(i64, i64), String> {
    static NUM: OnceLock<Regex> = OnceLock::new();
    let num = NUM.get_or_init(|| Regex::new(r"\d+(?:\.\d+)?").expect("static pattern"));
    let kg = raw.to_ascii_lowercase().contains("kg");
    let values = num
        .find_iter(raw)
        .map(|m| {
            let h = hundredths(m.as_str()).ok_or_else(|| format!("bad number in {raw:?}"))?;
            Ok(if kg {
                div_half_up(h, 100)
            } else {
                div_half_up(h * 45_359_237, 10_000_000_000)
            })
        })
        .collect::<Result<Vec<i64>, String>>()?;
    let (min, max) = match values[..] {
        [v] => (v, v),
        [a, b] => (a, b),
        _ => return Err(format!("unparseable weight {raw:?}")),
    };
    if !in_range(min, WEIGHT_RANGE) || !in_range(max, WEIGHT_RANGE) {
        return Err(format!("implausible weight {raw:?}"));
    }
    Ok((min, max))
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PlaceParts {
    pub city: Option<String>,
    pub state: Option<String>,
    pub postal_code: Option<String>,
}

/// `City, State ZIP` and `City, State`; anything else yields no parts.
pub fn parse_place_parts(raw: &str) -> PlaceParts {
    static FORM: OnceLock<Regex> = OnceLock::new();
    let form = FORM.get_or_init(|| {
        Regex::new(r"^\s*([^,\d][^,]*?)\s*,\s*([A-Za-z][A-Za-z .]*?)\.?(?:\s+(\d{5}(?:-\d{4})?))?\s*$")
            .expect("static pattern")
    });
    match form.captures(raw) {
        Some(c) => PlaceParts {
            city: Some(c[1].to_string()),
            state: Some(c[2].to_string()),
            postal_code: c.get(3).map(|m| m.as_str().to_string()),
        },
        None => PlaceParts::default(),
    }
}

pub fn normalize_sex(raw: &str) -> Option<&'static str> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "f" | "female" | "woman" | "girl" => Some("female"),
        "m" | "male" | "man" | "boy" => Some("male"),
        "u" | "unk" | "unknown" => Some("unknown"),
        _ => None,
    }
}

pub fn normalize_status(raw: &str) -> Option<&'static str> {
    match raw.trim().to_ascii_lowercase().replace('_', " ").as_str() {
        "missing" | "active" | "open" => Some("missing"),
        "located" | "found" | "recovered" | "located alive" => Some("located"),
        "deceased" | "dead" | "located deceased" => Some("deceased"),
        "unknown" => Some("unknown"),
        _ => None,
    }
}

fn as_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn coerce(kind: ValueKind, enum_values: Option<&[String]>, v: &Value) -> Result<Value, String> {
    static LEADING_INT: OnceLock<Regex> = OnceLock::new();
    match kind {
        ValueKind::String => match as_text(v) {
            Some(s) if !s.is_empty() => Ok(Value::String(s)),
            Some(_) => Ok(Value::Null),
            None => Err(format!("expected text, got {v}")),
        },
        ValueKind::Integer => match v {
            Value::Number(n) => n
                .as_i64()
                .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64))
                .map(Value::from)
                .ok_or_else(|| format!("not an integer: {n}")),
            Value::String(s) => {
                let re = LEADING_INT
                    .get_or_init(|| Regex::new(r"^\s*(-?\d+)(?:\.0+)?\b").expect("static pattern"));
                re.captures(s)
                    .and_then(|c| c[1].parse::<i64>().ok())
                    .map(Value::from)
                    .ok_or_else(|| format!("no integer in {s:?}"))
            }
            _ => Err(format!("expected integer, got {v}")),
        },
        ValueKind::Decimal => match v {
            Value::Number(n) => Ok(Value::Number(n.clone())),
            Value::String(s) => s
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|f| f.is_finite())
                .map(Value::from)
                .ok_or_else(|| format!("not a number: {s:?}")),
            _ => Err(format!("expected decimal, got {v}")),
        },
        ValueKind::Boolean => match v {
            Value::Bool(b) => Ok(Value::Bool(*b)),
            Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
                "true" | "yes" => Ok(Value::Bool(true)),
                "false" | "no" => Ok(Value::Bool(false)),
                _ => Err(format!("not a boolean: {s:?}")),
            },
            _ => Err(format!("expected boolean, got {v}")),
        },
        ValueKind::Enum => {
            let s = as_text(v)
                .ok_or_else(|| format!("expected enum text, got {v}"))?
                .to_ascii_lowercase()
                .replace([' ', '-'], "_");
            match enum_values {
                Some(allowed) if !allowed.contains(&s) => Err(format!("{s:?} is not an allowed value")),
                _ => Ok(Value::String(s)),
            }
        }
        ValueKind::Timestamp => {
            let s = as_text(v).ok_or_else(|| format!("expected timestamp text, got {v}"))?;
            normalize_timestamp(&s).map(|(iso, _)| Value::String(iso))
        }
        ValueKind::List | ValueKind::Section | ValueKind::Map => {
            Err(format!("{kind:?} values are not assigned directly"))
        }
    }
}

struct Builder<'a> {
    schema: &'a SchemaDefinition,
    tree: Value,
    set: BTreeSet<String>,
    origins: BTreeMap<String, FieldOrigin>,
    out: HarmonizedRecord,
}

impl Builder<'_> {
    fn assign(&mut self, path: &str, value: Value, origin: Option<FieldOrigin>) {
        if value.is_null() {
            return;
        }
        set_path(&mut self.tree, path, value);
        self.set.insert(path.to_string());
        if let Some(o) = origin {
            self.origins.insert(path.to_string(), o);
        }
    }

    fn fail(&mut self, key: &str, code: &str, message: String) {
        self.out.dropped_fields.push((key.to_string(), message.clone()));
        self.out
            .warnings
            .push(Warning::warn(Stage::Harmonize, code, format!("{key}: {message}")));
    }

    fn is_set(&self, path: &str) -> bool {
        self.set.contains(path)
    }
}

/// Canonicalizes extracted fields into a full record. Transform failures
/// become nulls with warnings; nothing here aborts.
pub fn harmonize(
    fields: &[DraftField],
    source_label: &str,
    mappings: &MappingTable,
    schema: &SchemaDefinition,
    tz_default: Option<&str>,
) -> HarmonizedRecord {
    let mut b = Builder {
        schema,
        tree: CaseRecord::default().to_value(),
        set: BTreeSet::new(),
        origins: BTreeMap::new(),
        out: HarmonizedRecord {
            record: CaseRecord::default(),
            applied_transforms: Vec::new(),
            dropped_fields: Vec::new(),
            warnings: Vec::new(),
        },
    };
    let mut places = Vec::new();
    let mut cues: BTreeMap<String, Vec<(usize, &DraftField)>> = BTreeMap::new();

    for f in fields {
        let Some(m) = mappings.lookup(source_label, &f.source_key) else {
            b.out.dropped_fields.push((f.source_key.clone(), "unmapped".into()));
            b.out.warnings.push(Warning::new(
                Stage::Harmonize,
                crate::warning::Severity::Info,
                codes::UNMAPPED_KEY,
                format!("{} has no mapping", f.source_key),
            ));
            continue;
        };
        let Some(entry) = b.schema.entry(&m.target_path) else {
            b.fail(&f.source_key, codes::UNMAPPED_KEY, format!("target {} not in schema", m.target_path));
            continue;
        };
        b.out.applied_transforms.push((m.target_path.clone(), m.transform_id));
        match m.transform_id {
            TransformId::PlaceParts => places.push((m, f)),
            TransformId::CueList => {
                let idx = f
                    .source_key
                    .rsplit_once('.')
                    .and_then(|(_, i)| i.parse().ok())
                    .unwrap_or(0);
                cues.entry(m.target_path.clone()).or_default().push((idx, f));
            }
            _ if b.is_set(&m.target_path) => {
                b.out
                    .dropped_fields
                    .push((f.source_key.clone(), format!("{} already set", m.target_path)));
            }
            TransformId::None => {
                let kind = entry.value_kind;
                let allowed = entry.enum_values.clone();
                match coerce(kind, allowed.as_deref(), &f.value) {
                    Ok(v) => b.assign(&m.target_path, v, f.origin),
                    Err(e) => b.fail(&f.source_key, codes::UNPARSEABLE_VALUE, e),
                }
            }
            TransformId::Timestamp => match as_text(&f.value).map(|s| normalize_timestamp(&s)) {
                Some(Ok((iso, _))) => b.assign(&m.target_path, Value::String(iso), f.origin),
                Some(Err(e)) => b.fail(&f.source_key, codes::UNPARSEABLE_VALUE, e),
                None => b.fail(&f.source_key, codes::UNPARSEABLE_VALUE, "expected text".into()),
            },
            TransformId::Height | TransformId::Weight => {
                let raw = as_text(&f.value).unwrap_or_default();
                let parsed = if m.transform_id == TransformId::Height {
                    normalize_height(&raw)
                } else {
                    normalize_weight(&raw)
                };
                match parsed {
                    Ok((lo, hi)) => {
                        let max_path = m.target_path.replace("_min_", "_max_");
                        b.assign(&m.target_path, Value::from(lo), f.origin);
                        if max_path != m.target_path {
                            b.assign(&max_path, Value::from(hi), f.origin);
                        }
                    }
                    Err(e) => {
                        let code = if e.starts_with("implausible") {
                            codes::IMPLAUSIBLE_VALUE
                        } else {
                            codes::UNPARSEABLE_VALUE
                        };
                        b.fail(&f.source_key, code, e)
                    }
                }
            }
            TransformId::SexEnum => {
                let raw = as_text(&f.value).unwrap_or_default();
                let v = normalize_sex(&raw).unwrap_or_else(|| {
                    b.out.warnings.push(Warning::warn(
                        Stage::Harmonize,
                        codes::UNKNOWN_ENUM,
                        format!("{}: {raw:?} recorded as unknown", f.source_key),
                    ));
                    "unknown"
                });
                b.assign(&m.target_path, Value::from(v), f.origin);
            }
            TransformId::StatusEnum => {
                let raw = as_text(&f.value).unwrap_or_default();
                match normalize_status(&raw) {
                    Some(v) => b.assign(&m.target_path, Value::from(v), f.origin),
                    None => b.fail(&f.source_key, codes::UNKNOWN_ENUM, format!("unrecognized status {raw:?}")),
                }
            }
        }
    }

    for (target, mut items) in cues {
        items.sort_by_key(|(i, _)| *i);
        let mut kept: Vec<String> = Vec::new();
        for (_, f) in items {
            let Some(text) = as_text(&f.value).filter(|t| !t.is_empty()) else {
                b.fail(&f.source_key, codes::UNPARSEABLE_VALUE, "empty cue".into());
                continue;
            };
            if kept.iter().any(|k| k.eq_ignore_ascii_case(&text)) {
                continue;
            }
            if let Some(o) = f.origin {
                b.origins.insert(format!("{target}.{}", kept.len()), o);
            }
            kept.push(text);
        }
        set_path(&mut b.tree, &target, Value::from(kept));
    }

    for (m, f) in places {
        let Some(raw) = as_text(&f.value).filter(|t| !t.is_empty()) else {
            b.fail(&f.source_key, codes::UNPARSEABLE_VALUE, "empty place".into());
            continue;
        };
        if !b.is_set(&m.target_path) {
            b.assign(&m.target_path, Value::String(raw.clone()), f.origin);
        }
        let parts = parse_place_parts(&raw);
        for (leaf, v) in [("city", parts.city), ("state", parts.state), ("postal_code", parts.postal_code)] {
            let path = format!("spatial.{leaf}");
            if let Some(v) = v {
                if !b.is_set(&path) && b.schema.entry(&path).is_some() {
                    b.assign(&path, Value::String(v), f.origin);
                }
            }
        }
    }

    let has_ts = ["temporal.last_seen_ts", "temporal.reported_missing_ts", "outcome.status_ts"]
        .iter()
        .any(|p| b.is_set(p));
    if has_ts && !b.is_set("temporal.timezone") {
        if let Some(tz) = tz_default {
            b.assign("temporal.timezone", Value::from(tz), None);
        }
    }
    if b.is_set("spatial.lat") && b.is_set("spatial.lon") && !b.is_set("spatial.geocode_method") {
        set_path(&mut b.tree, "spatial.geocode_method", Value::from("source_provided"));
    }

    let mut record = match CaseRecord::from_value(&b.tree) {
        Ok(r) => r,
        Err(e) => {
            b.out.warnings.push(Warning::warn(
                Stage::Harmonize,
                codes::UNPARSEABLE_VALUE,
                format!("harmonized values do not fit the record type: {e}"),
            ));
            CaseRecord::default()
        }
    };
    if resolve_path(&b.tree, "case_id").ok().flatten().is_none() {
        record.case_id.clear();
    }
    record.provenance.source_label = source_label.to_string();
    record.provenance.field_origins = b.origins;
    b.out.record = record;
    b.out
}

/// Harmonizes a nested candidate through the identity mapping. Provenance
/// keys are ignored since the pipeline owns them.
pub fn harmonize_candidate(
    candidate: &Value,
    source_label: &str,
    schema: &SchemaDefinition,
    tz_default: Option<&str>,
) -> HarmonizedRecord {
    let fields: Vec<DraftField> = candidate_fields(candidate)
        .into_iter()
        .filter(|f| !f.source_key.starts_with("provenance."))
        .collect();
    harmonize(&fields, source_label, &MappingTable::identity(schema), schema, tz_default)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{default_schema, validate, Sex};
    use proptest::prelude::*;

    fn field(key: &str, v: &str) -> DraftField {
        DraftField {
            source_key: key.into(),
            value: Value::from(v),
            origin: Some(FieldOrigin {
                segment_index: 0,
                char_start: 1,
                char_end: 2,
            }),
        }
    }

    fn run(fields: &[DraftField], tz: Option<&str>) -> HarmonizedRecord {
        harmonize(fields, "src", &MappingTable::builtin(), &default_schema(), tz)
    }

    #[test]
    fn timestamps() {
        assert_eq!(normalize_timestamp("July 1, 2023"), Ok(("2023-07-01".into(), Precision::Date)));
        assert_eq!(normalize_timestamp("Jul 1, 2023"), Ok(("2023-07-01".into(), Precision::Date)));
        assert_eq!(normalize_timestamp("07/01/2023"), Ok(("2023-07-01".into(), Precision::Date)));
        assert_eq!(normalize_timestamp("7/1/2023"), Ok(("2023-07-01".into(), Precision::Date)));
        assert_eq!(
            normalize_timestamp("2023-07-01T14:30:00-04:00"),
            Ok(("2023-07-01T14:30:00-04:00".into(), Precision::Datetime))
        );
        assert!(normalize_timestamp("sometime last spring").is_err());
    }

    #[test]
    fn heights() {
        assert_eq!(normalize_height("4'8\" - 5'0\""), Ok((142, 152)));
        assert_eq!(normalize_height("5'0\""), Ok((152, 152)));
        assert_eq!(normalize_height("between 5'2\" and 5'4\""), Ok((157, 163)));
        assert_eq!(normalize_height("160 cm"), Ok((160, 160)));
        assert_eq!(normalize_height("63 in"), Ok((160, 160)));
        assert!(normalize_height("tall").is_err());
        assert!(normalize_height("40'0\"").is_err());
    }

    #[test]
    fn half_up_exact_at_midpoint() {
        // 25 in = 63.5 cm exactly
        assert_eq!(normalize_height("25 in"), Ok((64, 64)));
        assert_eq!(normalize_height("2'1\""), Ok((64, 64)));
    }

    #[test]
    fn weights() {
        assert_eq!(normalize_weight("100 - 120 lbs"), Ok((45, 54)));
        assert_eq!(normalize_weight("110 lbs"), Ok((50, 50)));
        assert_eq!(normalize_weight("110 pounds"), Ok((50, 50)));
        assert_eq!(normalize_weight("50 kg"), Ok((50, 50)));
        assert!(normalize_weight("0 lbs").is_err());
        assert!(normalize_weight("heavy").is_err());
    }

    #[test]
    fn place_parts() {
        let p = parse_place_parts("Culpeper, Virginia 22701");
        assert_eq!(
            (p.city.as_deref(), p.state.as_deref(), p.postal_code.as_deref()),
            (Some("Culpeper"), Some("Virginia"), Some("22701"))
        );
        let p = parse_place_parts("Norfolk, Virginia");
        assert_eq!((p.city.as_deref(), p.state.as_deref(), p.postal_code), (Some("Norfolk"), Some("Virginia"), None));
        assert_eq!(parse_place_parts("near Route 1"), PlaceParts::default());
    }

    #[test]
    fn bulletin_date_with_offset_zone() {
        let h = run(&[field("temporal.last_seen_ts", "07/01/2023")], Some("-04:00"));
        assert_eq!(h.record.temporal.last_seen_ts.as_deref(), Some("2023-07-01"));
        assert_eq!(h.record.temporal.timezone.as_deref(), Some("-04:00"));
        assert!(h.record.provenance.field_origins.contains_key("temporal.last_seen_ts"));
    }

    #[test]
    fn enums_and_defaults() {
        let h = run(&[field("demographic.sex", "Female")], None);
        assert_eq!(h.record.demographic.sex, Sex::Female);
        assert_eq!(h.record.outcome.status, crate::schema::CaseStatus::Missing);
        assert!(h.record.narrative_osint.movement_cues.is_empty());
        assert_eq!(h.record.temporal.timezone, None);
        let v = h.record.to_value();
        for s in crate::schema::SECTIONS {
            assert!(v.get(s).is_some_and(Value::is_object), "{s}");
        }
        let h = run(&[field("demographic.sex", "alien")], None);
        assert_eq!(h.record.demographic.sex, Sex::Unknown);
        assert_eq!(h.warnings[0].code, codes::UNKNOWN_ENUM);
    }

    #[test]
    fn place_parts_fill_only_absent() {
        let h = run(
            &[
                field("spatial.last_seen_location", "Culpeper, Virginia 22701"),
                field("spatial.city", "Culpeper Town"),
            ],
            None,
        );
        let s = &h.record.spatial;
        assert_eq!(s.city.as_deref(), Some("Culpeper Town"));
        assert_eq!(s.state.as_deref(), Some("Virginia"));
        assert_eq!(s.postal_code.as_deref(), Some("22701"));
        assert_eq!(s.last_seen_location.as_deref(), Some("Culpeper, Virginia 22701"));
    }

    #[test]
    fn ranges_and_failures() {
        let h = run(
            &[
                field("demographic.height", "4'8\" - 5'0\""),
                field("demographic.weight", "0 lbs"),
                field("demographic.age_years", "15 Years Old"),
                field("temporal.reported_missing_ts", "sometime"),
                field("zodiac", "leo"),
            ],
            None,
        );
        let d = &h.record.demographic;
        assert_eq!((d.height_min_cm, d.height_max_cm), (Some(142), Some(152)));
        assert_eq!((d.weight_min_kg, d.weight_max_kg), (None, None));
        assert_eq!(d.age_years, Some(15));
        assert_eq!(h.record.temporal.reported_missing_ts, None);
        let dropped: Vec<&str> = h.dropped_fields.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(dropped, ["demographic.weight", "temporal.reported_missing_ts", "zodiac"]);
    }

    #[test]
    fn cue_order_is_numeric() {
        let fields: Vec<DraftField> = (0..12)
            .map(|i| field(&format!("narrative_osint.movement_cues.{i}"), &format!("Place{i}")))
            .collect();
        let h = run(&fields, None);
        let cues = &h.record.narrative_osint.movement_cues;
        assert_eq!(cues[2], "Place2");
        assert_eq!(cues[11], "Place11");
        assert!(h.record.provenance.field_origins.contains_key("narrative_osint.movement_cues.11"));
    }

    #[test]
    fn source_coordinates_mark_method() {
        let h = run(&[field("spatial.lat", "38.5"), field("spatial.lon", "-78.0")], None);
        assert_eq!(h.record.spatial.geocode_method, crate::schema::GeocodeMethod::SourceProvided);
        assert_eq!(h.record.spatial.lat, Some(38.5));
    }

    #[test]
    fn identity_harmonize_is_stable() {
        let schema = default_schema();
        let mut r = CaseRecord::empty("MP1");
        r.demographic.name = Some("Ada Example".into());
        r.demographic.sex = Sex::Female;
        r.demographic.height_min_cm = Some(150);
        r.demographic.height_max_cm = Some(152);
        r.spatial.city = Some("Culpeper".into());
        r.spatial.lat = Some(38.4732);
        r.spatial.lon = Some(-77.9966);
        r.spatial.geocode_method = crate::schema::GeocodeMethod::Gazetteer;
        r.spatial.geocode_plausible = Some(true);
        r.temporal.last_seen_ts = Some("2023-07-01".into());
        r.temporal.timezone = Some("America/New_York".into());
        r.narrative_osint.movement_cues = vec!["Maryland".into(), "Delaware".into()];
        r.outcome.status = crate::schema::CaseStatus::Located;
        r.provenance.source_label = "src".into();
        let h = harmonize_candidate(&r.to_value(), "src", &schema, Some("UTC"));
        assert_eq!(h.record, r);
        assert!(validate(&h.record.to_value(), &schema).valid);
    }

    proptest! {
        #[test]
        fn height_round_trip_within_one(cm in 30i64..=250) {
            let inches = (cm as f64 / 2.54).round() as i64;
            let (lo, hi) = normalize_height(&format!("{inches} in")).unwrap_or((cm, cm));
            prop_assert_eq!(lo, hi);
            prop_assert!((lo - cm).abs() <= 1);
        }

        #[test]
        fn six_sections_always_present(keys in proptest::collection::vec("[a-z_.]{0,20}", 0..6)) {
            let fields: Vec<DraftField> = keys.iter().map(|k| field(k, "x")).collect();
            let v = run(&fields, None).record.to_value();
            for s in crate::schema::SECTIONS {
                prop_assert!(v.get(s).is_some_and(Value::is_object));
            }
        }
    }
}
