//! JSONL and flattened CSV outputs plus the structured warning log.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::schema::{canonical_position, path::set_path, CaseRecord, SchemaDefinition, ValueKind};
use crate::warning::{Severity, Stage, Warning};

#[derive(Debug, thiserror::Error)]
pub enum EmitError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path} line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EmitError + '_ {
    move |source| EmitError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Ascending case_id; the order every output file uses.
pub fn sort_records(records: &mut [CaseRecord]) {
    records.sort_by(|a, b| a.case_id.cmp(&b.case_id));
}

pub fn to_jsonl(records: &[CaseRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("case record serializes"));
        out.push('\n');
    }
    out
}

/// One object per line in schema key order; returns the line count.
pub fn write_jsonl(records: &[CaseRecord], path: &Path) -> Result<usize, EmitError> {
    std::fs::write(path, to_jsonl(records)).map_err(io_err(path))?;
    Ok(records.len())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<CaseRecord>, EmitError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| EmitError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Dot-path column name to scalar text, in depth-first record order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FlatRow {
    pub columns: Vec<(String, String)>,
}

impl FlatRow {
    pub fn get(&self, column: &str) -> Option<&str> {
        self.columns.iter().find(|(c, _)| c == column).map(|(_, v)| v.as_str())
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn flatten_value(value: &Value) -> FlatRow {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        match v {
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
            _ => out.push((prefix.to_string(), scalar_text(v))),
        }
    }
    let mut columns = Vec::new();
    walk("", value, &mut columns);
    FlatRow { columns }
}

pub fn flatten(record: &CaseRecord) -> FlatRow {
    flatten_value(&record.to_value())
}

enum Column<'a> {
    Leaf(&'a str, ValueKind),
    ListItem(&'a str, usize),
    MapItem(&'a str, &'a str, usize),
    Unknown,
}

fn classify<'a>(column: &'a str, schema: &'a SchemaDefinition) -> Column<'a> {
    if let Some(e) = schema.entry(column) {
        if !matches!(e.value_kind, ValueKind::List | ValueKind::Section | ValueKind::Map) {
            return Column::Leaf(column, e.value_kind);
        }
    }
    if let Some((base, idx)) = column.rsplit_once('.') {
        if let Ok(i) = idx.parse::<usize>() {
            if schema.entry(base).is_some_and(|e| e.value_kind == ValueKind::List) {
                return Column::ListItem(base, i);
            }
            for e in schema.entries().iter().filter(|e| e.value_kind == ValueKind::Map) {
                if let Some(key) = base.strip_prefix(&e.field_path).and_then(|r| r.strip_prefix('.')) {
                    return Column::MapItem(&e.field_path, key, i);
                }
            }
        }
    }
    Column::Unknown
}

fn typed(kind: ValueKind, text: &str) -> Value {
    if text.is_empty() {
        return Value::Null;
    }
    let parsed = match kind {
        ValueKind::Integer => text.parse::<i64>().ok().map(Value::from),
        ValueKind::Decimal => text.parse::<f64>().ok().filter(|f| f.is_finite()).map(Value::from),
        ValueKind::Boolean => match text {
            "true" => Some(Value::Bool(true)),
            "false" => Some(Value::Bool(false)),
            _ => None,
        },
        _ => None,
    };
    parsed.unwrap_or_else(|| Value::String(text.to_string()))
}

/// Inverse of `flatten` under the schema's typing. Columns the schema does
/// not know are kept so validation reports them as unknown keys.
pub fn unflatten(row: &FlatRow, schema: &SchemaDefinition) -> Value {
    let mut tree = Value::Object(Map::new());
    let mut lists: BTreeMap<&str, BTreeMap<usize, &str>> = BTreeMap::new();
    let mut maps: BTreeMap<&str, BTreeMap<&str, BTreeMap<usize, &str>>> = BTreeMap::new();
    for (column, text) in &row.columns {
        match classify(column, schema) {
            Column::Leaf(path, kind) => {
                set_path(&mut tree, path, typed(kind, text));
            }
            Column::ListItem(base, i) => {
                lists.entry(base).or_default().insert(i, text);
            }
            Column::MapItem(base, key, i) => {
                maps.entry(base).or_default().entry(key).or_default().insert(i, text);
            }
            Column::Unknown => {
                set_path(&mut tree, column, Value::String(text.clone()));
            }
        }
    }
    for e in schema.entries() {
        match e.value_kind {
            ValueKind::List => {
                let items: Vec<Value> = lists
                    .get(e.field_path.as_str())
                    .map(|m| m.values().filter(|t| !t.is_empty()).map(|t| Value::from(*t)).collect())
                    .unwrap_or_default();
                set_path(&mut tree, &e.field_path, Value::Array(items));
            }
            ValueKind::Map => {
                let mut obj = Map::new();
                for (key, parts) in maps.get(e.field_path.as_str()).into_iter().flatten() {
                    if parts.values().all(|t| t.is_empty()) {
                        continue;
                    }
                    let arr = parts.values().map(|t| typed(ValueKind::Integer, t)).collect();
                    obj.insert(key.to_string(), Value::Array(arr));
                }
                set_path(&mut tree, &e.field_path, Value::Object(obj));
            }
            _ => {}
        }
    }
    tree
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Token<'a> {
    Num(u64),
    Text(&'a str),
}

fn column_key<'a>(column: &'a str, schema: &'a SchemaDefinition) -> (usize, Vec<Token<'a>>) {
    let base_len = match classify(column, schema) {
        Column::Leaf(p, _) => p.len(),
        Column::ListItem(b, _) | Column::MapItem(b, _, _) => b.len(),
        Column::Unknown => 0,
    };
    let base = &column[..base_len];
    let position = if base.is_empty() {
        usize::MAX
    } else {
        canonical_position(base).unwrap_or(usize::MAX - 1)
    };
    let rest = if base.is_empty() { column } else { &column[base_len..] };
    let tokens = rest
        .split('.')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map(Token::Num).unwrap_or(Token::Text(t)))
        .collect();
    (position, tokens)
}

/// Union of the rows' columns in schema order, list indices numerically.
pub fn column_union(rows: &[FlatRow], schema: &SchemaDefinition) -> Vec<String> {
    let mut all: Vec<&str> = rows
        .iter()
        .flat_map(|r| r.columns.iter().map(|(c, _)| c.as_str()))
        .collect();
    all.sort_unstable();
    all.dedup();
    all.sort_by(|a, b| match column_key(a, schema).cmp(&column_key(b, schema)) {
        Ordering::Equal => a.cmp(b),
        o => o,
    });
    all.into_iter().map(String::from).collect()
}

pub fn to_csv(records: &[CaseRecord], schema: &SchemaDefinition) -> Result<String, EmitError> {
    let rows: Vec<FlatRow> = records.iter().map(flatten).collect();
    let header = column_union(&rows, schema);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(&header)?;
    for row in &rows {
        let values: BTreeMap<&str, &str> = row.columns.iter().map(|(c, v)| (c.as_str(), v.as_str())).collect();
        w.write_record(header.iter().map(|c| values.get(c.as_str()).copied().unwrap_or("")))?;
    }
    let bytes = w.into_inner().map_err(|e| EmitError::Io {
        path: "<csv buffer>".into(),
        source: e.into_error(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 input is utf-8"))
}

pub fn write_csv(records: &[CaseRecord], schema: &SchemaDefinition, path: &Path) -> Result<usize, EmitError> {
    std::fs::write(path, to_csv(records, schema)?).map_err(io_err(path))?;
    Ok(records.len())
}

pub fn read_csv(path: &Path) -> Result<Vec<FlatRow>, EmitError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<Vec<FlatRow>, EmitError> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(FlatRow {
            columns: header.iter().cloned().zip(rec.iter().map(String::from)).collect(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningLogEntry {
    pub document_id: String,
    pub case_id: Option<String>,
    pub stage: Stage,
    pub severity: Severity,
    pub code: String,
    pub message: String,
    pub ts: String,
}

impl WarningLogEntry {
    pub fn from_warning(w: Warning, document_id: &str, case_id: Option<&str>, ts: &str) -> Self {
        WarningLogEntry {
            document_id: document_id.to_string(),
            case_id: case_id.map(String::from),
            stage: w.stage,
            severity: w.severity,
            code: w.code,
            message: w.message,
            ts: ts.to_string(),
        }
    }
}

/// Append-only warning collector; tolerant of concurrent appends and of a
/// poisoned lock.
#[derive(Debug, Default)]
pub struct WarningSink {
    entries: Mutex<Vec<WarningLogEntry>>,
}

impl WarningSink {
    pub fn new() -> Self {
        WarningSink::default()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Vec<WarningLogEntry>> {
        self.entries.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<WarningLogEntry> {
        self.lock().clone()
    }

    pub fn count_by_severity(&self) -> BTreeMap<String, usize> {
        let mut out: BTreeMap<String, usize> =
            [Severity::Info, Severity::Warning, Severity::Error].iter().map(|s| (s.as_str().to_string(), 0)).collect();
        for e in self.lock().iter() {
            *out.entry(e.severity.as_str().to_string()).or_default() += 1;
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in self.lock().iter() {
            out.push_str(&serde_json::to_string(e).expect("warning serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<usize, EmitError> {
        let file = std::fs::File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_jsonl().as_bytes()).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))?;
        Ok(self.len())
    }
}

pub fn log_warning(entry: WarningLogEntry, sink: &WarningSink) {
    sink.lock().push(entry);
}
