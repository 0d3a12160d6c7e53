//! Strict validation of candidate records against a [`SchemaDefinition`].
//!
//! Every violation is collected in one pass; the repair loop relies on
//! receiving the complete list.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::definition::{SchemaDefinition, SchemaEntry, ValueKind};
use super::timestamp::IsoTimestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    MissingRequired,
    WrongType,
    OutOfRange,
    BadEnum,
    BadPattern,
    BadTimestamp,
    UnknownKey,
}

impl ViolationCode {
    pub const ALL: [ViolationCode; 7] = [
        ViolationCode::MissingRequired,
        ViolationCode::WrongType,
        ViolationCode::OutOfRange,
        ViolationCode::BadEnum,
        ViolationCode::BadPattern,
        ViolationCode::BadTimestamp,
        ViolationCode::UnknownKey,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::MissingRequired => "missing_required",
            ViolationCode::WrongType => "wrong_type",
            ViolationCode::OutOfRange => "out_of_range",
            ViolationCode::BadEnum => "bad_enum",
            ViolationCode::BadPattern => "bad_pattern",
            ViolationCode::BadTimestamp => "bad_timestamp",
            ViolationCode::UnknownKey => "unknown_key",
        }
    }
}

impl std::fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationViolation {
    pub field_path: String,
    pub code: ViolationCode,
    pub message: String,
}

impl std::fmt::Display for ValidationViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}: {}", self.field_path, self.code, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<ValidationViolation>,
}

impl ValidationReport {
    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(|v| v.to_string()).collect()
    }

    pub fn cited_paths(&self) -> Vec<&str> {
        self.violations.iter().map(|v| v.field_path.as_str()).collect()
    }
}

struct Collector(Vec<ValidationViolation>);

impl Collector {
    fn push(&mut self, path: &str, code: ViolationCode, message: impl Into<String>) {
        self.0.push(ValidationViolation {
            field_path: path.to_string(),
            code,
            message: message.into(),
        });
    }
}

/// Checks `candidate` against `schema`. Never fails; malformedness is
/// reported as violations ordered by field path, then code.
pub fn validate(candidate: &Value, schema: &SchemaDefinition) -> ValidationReport {
    let mut out = Collector(Vec::new());
    match candidate.as_object() {
        Some(root) => check_object(root, "", schema, &mut out),
        None => out.push("", ViolationCode::WrongType, "record must be an object"),
    }
    if candidate.is_object() {
        check_cross_field(candidate, &mut out);
    }
    let mut violations = out.0;
    violations.sort_by(|a, b| (&a.field_path, a.code).cmp(&(&b.field_path, b.code)));
    violations.dedup_by(|a, b| a.field_path == b.field_path && a.code == b.code);
    ValidationReport {
        valid: violations.is_empty(),
        violations,
    }
}

fn join(parent: &str, key: &str) -> String {
    if parent.is_empty() {
        key.to_string()
    } else {
        format!("{parent}.{key}")
    }
}

fn check_object(obj: &Map<String, Value>, parent: &str, schema: &SchemaDefinition, out: &mut Collector) {
    for key in obj.keys() {
        let path = join(parent, key);
        if schema.entry(&path).is_none() {
            out.push(&path, ViolationCode::UnknownKey, format!("{path} is not in the schema"));
        }
    }
    for entry in schema.children(parent) {
        match obj.get(entry.leaf_name()) {
            None | Some(Value::Null) => {
                if entry.required {
                    out.push(
                        &entry.field_path,
                        ViolationCode::MissingRequired,
                        format!("{} is required", entry.field_path),
                    );
                }
            }
            Some(v) => check_value(v, entry, schema, out),
        }
    }
}

fn check_value(v: &Value, entry: &SchemaEntry, schema: &SchemaDefinition, out: &mut Collector) {
    let path = entry.field_path.as_str();
    let wrong_type = |out: &mut Collector, want: &str| {
        out.push(path, ViolationCode::WrongType, format!("{path} must be {want}, found {}", kind_name(v)));
    };
    match entry.value_kind {
        ValueKind::Section => match v.as_object() {
            Some(obj) => check_object(obj, path, schema, out),
            None => wrong_type(out, "an object"),
        },
        ValueKind::String => match v.as_str() {
            Some(s) => check_pattern(s, path, schema, out),
            None => wrong_type(out, "a string"),
        },
        ValueKind::Integer => {
            if v.is_i64() || v.is_u64() {
                check_range(v.as_f64().unwrap_or(f64::NAN), entry, out);
            } else {
                wrong_type(out, "an integer");
            }
        }
        ValueKind::Decimal => match v.as_f64() {
            Some(x) if x.is_finite() => check_range(x, entry, out),
            _ => wrong_type(out, "a number"),
        },
        ValueKind::Boolean => {
            if !v.is_boolean() {
                wrong_type(out, "a boolean");
            }
        }
        ValueKind::Enum => match v.as_str() {
            Some(s) => {
                let allowed = entry.enum_values.as_deref().unwrap_or_default();
                if !allowed.iter().any(|a| a == s) {
                    out.push(
                        path,
                        ViolationCode::BadEnum,
                        format!("{path} must be one of [{}], found {s:?}", allowed.join(", ")),
                    );
                }
            }
            None => wrong_type(out, "an enum string"),
        },
        ValueKind::Timestamp => match v.as_str() {
            Some(s) => {
                if IsoTimestamp::parse(s).is_none() {
                    out.push(
                        path,
                        ViolationCode::BadTimestamp,
                        format!("{path} must be an ISO 8601 date or datetime, found {s:?}"),
                    );
                }
            }
            None => wrong_type(out, "a timestamp string"),
        },
        ValueKind::List => match v.as_array() {
            Some(items) => {
                for (i, item) in items.iter().enumerate() {
                    let item_path = format!("{path}.{i}");
                    match item.as_str() {
                        Some(s) => {
                            if let Some(re) = schema.pattern_for(path) {
                                if !re.is_match(s) {
                                    out.push(
                                        &item_path,
                                        ViolationCode::BadPattern,
                                        format!("{item_path} does not match {}", re.as_str()),
                                    );
                                }
                            }
                        }
                        None => out.push(
                            &item_path,
                            ViolationCode::WrongType,
                            format!("{item_path} must be a string"),
                        ),
                    }
                }
            }
            None => wrong_type(out, "a list"),
        },
        ValueKind::Map => match v.as_object() {
            Some(obj) => check_origins(obj, path, schema, out),
            None => wrong_type(out, "an object"),
        },
    }
}

fn check_pattern(s: &str, path: &str, schema: &SchemaDefinition, out: &mut Collector) {
    if let Some(re) = schema.pattern_for(path) {
        if !re.is_match(s) {
            out.push(
                path,
                ViolationCode::BadPattern,
                format!("{path} value {s:?} does not match {}", re.as_str()),
            );
        }
    }
}

fn check_range(x: f64, entry: &SchemaEntry, out: &mut Collector) {
    let Some((min, max)) = entry.numeric_range else {
        return;
    };
    let low = min.is_some_and(|m| x < m);
    let high = max.is_some_and(|m| x > m);
    if low || high {
        let fmt = |b: Option<f64>| b.map(|b| b.to_string()).unwrap_or_else(|| "_".into());
        out.push(
            &entry.field_path,
            ViolationCode::OutOfRange,
            format!("{} = {x} outside [{}, {}]", entry.field_path, fmt(min), fmt(max)),
        );
    }
}

/// Origin map keys must name schema leaves (list indices allowed) and values
/// must be `[segment, start, end]` with `start <= end`.
fn check_origins(obj: &Map<String, Value>, path: &str, schema: &SchemaDefinition, out: &mut Collector) {
    for (key, v) in obj {
        if !origin_key_is_valid(key, schema) {
            out.push(path, ViolationCode::UnknownKey, format!("{path} has unknown field path {key:?}"));
        }
        let ok = v.as_array().is_some_and(|a| {
            a.len() == 3
                && a.iter().all(|n| n.is_u64())
                && a[1].as_u64() <= a[2].as_u64()
        });
        if !ok {
            out.push(
                path,
                ViolationCode::WrongType,
                format!("{path}[{key:?}] must be [segment, start, end]"),
            );
        }
    }
}

fn origin_key_is_valid(key: &str, schema: &SchemaDefinition) -> bool {
    if schema.is_leaf(key) {
        return true;
    }
    match key.rsplit_once('.') {
        Some((base, idx)) => {
            idx.parse::<usize>().is_ok()
                && schema
                    .entry(base)
                    .is_some_and(|e| e.value_kind == ValueKind::List)
        }
        None => false,
    }
}

fn num(v: &Value, path: &str) -> Option<f64> {
    super::path::resolve_path(v, path).ok().flatten().and_then(Value::as_f64)
}

fn is_null(v: &Value, path: &str) -> bool {
    super::path::resolve_path(v, path)
        .ok()
        .flatten()
        .is_none_or(Value::is_null)
}

/// Invariants spanning several fields. Values of the wrong type are skipped
/// here; they are already reported by the per-field checks.
fn check_cross_field(v: &Value, out: &mut Collector) {
    for (min, max) in [
        ("demographic.age_min", "demographic.age_max"),
        ("demographic.height_min_cm", "demographic.height_max_cm"),
        ("demographic.weight_min_kg", "demographic.weight_max_kg"),
    ] {
        if let (Some(lo), Some(hi)) = (num(v, min), num(v, max)) {
            if lo > hi {
                out.push(max, ViolationCode::OutOfRange, format!("{max} = {hi} is below {min} = {lo}"));
            }
        }
    }
    let lat_null = is_null(v, "spatial.lat");
    let lon_null = is_null(v, "spatial.lon");
    if lat_null != lon_null {
        let present = if lat_null { "spatial.lon" } else { "spatial.lat" };
        out.push(present, ViolationCode::OutOfRange, "lat and lon must both be set or both be null");
    }
    let method = super::path::resolve_path(v, "spatial.geocode_method")
        .ok()
        .flatten()
        .and_then(Value::as_str);
    if method.is_none_or(|m| m == "none") && !lat_null {
        out.push(
            "spatial.lat",
            ViolationCode::OutOfRange,
            "coordinates present but geocode_method is none",
        );
    }
    let ts = |p: &str| {
        super::path::resolve_path(v, p)
            .ok()
            .flatten()
            .and_then(Value::as_str)
            .and_then(IsoTimestamp::parse)
    };
    if let (Some(seen), Some(reported)) = (ts("temporal.last_seen_ts"), ts("temporal.reported_missing_ts")) {
        if seen.compare_full(&reported) == Some(std::cmp::Ordering::Greater) {
            out.push(
                "temporal.reported_missing_ts",
                ViolationCode::OutOfRange,
                "reported_missing_ts precedes last_seen_ts",
            );
        }
    }
}

fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "list",
        Value::Object(_) => "object",
    }
}
