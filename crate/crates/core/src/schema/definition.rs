//! The schema as data: one entry per field path, loadable from and
//! serializable to a line-oriented JSON file sorted by field path.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::record::CaseRecord;
use crate::config::{read_json_lines, ConfigError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    String,
    Integer,
    Decimal,
    Boolean,
    Enum,
    /// ISO 8601 date or datetime string.
    Timestamp,
    /// List of strings; `pattern` applies to each element.
    List,
    Section,
    /// Open-keyed object of field path to `[segment, start, end]`.
    Map,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaEntry {
    pub field_path: String,
    pub value_kind: ValueKind,
    #[serde(default)]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enum_values: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_range: Option<(Option<f64>, Option<f64>)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
}

impl SchemaEntry {
    fn new(path: &str, kind: ValueKind) -> Self {
        SchemaEntry {
            field_path: path.to_string(),
            value_kind: kind,
            required: false,
            enum_values: None,
            numeric_range: None,
            pattern: None,
        }
    }

    fn required(mut self) -> Self {
        self.required = true;
        self
    }

    fn range(mut self, min: f64, max: Option<f64>) -> Self {
        self.numeric_range = Some((Some(min), max));
        self
    }

    fn values(mut self, values: &[&str]) -> Self {
        self.enum_values = Some(values.iter().map(|v| v.to_string()).collect());
        self
    }

    fn pattern(mut self, pattern: &str) -> Self {
        self.pattern = Some(pattern.to_string());
        self
    }

    pub fn parent(&self) -> Option<&str> {
        self.field_path.rsplit_once('.').map(|(p, _)| p)
    }

    pub fn leaf_name(&self) -> &str {
        self.field_path
            .rsplit_once('.')
            .map(|(_, l)| l)
            .unwrap_or(&self.field_path)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("duplicate schema entry for {0}")]
    DuplicatePath(String),
    #[error("entry {path} has invalid pattern: {source}")]
    BadPattern {
        path: String,
        #[source]
        source: regex::Error,
    },
    #[error("entry {0} has no parent section entry")]
    Orphan(String),
    #[error("enum entry {0} has no enum_values")]
    EmptyEnum(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Immutable, validated schema. Entries are kept sorted by field path.
#[derive(Debug, Clone)]
pub struct SchemaDefinition {
    entries: Vec<SchemaEntry>,
    index: HashMap<String, usize>,
    patterns: Vec<Option<Regex>>,
}

impl PartialEq for SchemaDefinition {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl SchemaDefinition {
    pub fn new(mut entries: Vec<SchemaEntry>) -> Result<Self, SchemaError> {
        entries.sort_by(|a, b| a.field_path.cmp(&b.field_path));
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.field_path.clone(), i).is_some() {
                return Err(SchemaError::DuplicatePath(e.field_path.clone()));
            }
            if e.value_kind == ValueKind::Enum
                && e.enum_values.as_ref().is_none_or(|v| v.is_empty())
            {
                return Err(SchemaError::EmptyEnum(e.field_path.clone()));
            }
        }
        for e in &entries {
            if let Some(parent) = e.parent() {
                match index.get(parent) {
                    Some(&p) if entries[p].value_kind == ValueKind::Section => {}
                    _ => return Err(SchemaError::Orphan(e.field_path.clone())),
                }
            }
        }
        let patterns = entries
            .iter()
            .map(|e| {
                e.pattern
                    .as_deref()
                    .map(Regex::new)
                    .transpose()
                    .map_err(|source| SchemaError::BadPattern {
                        path: e.field_path.clone(),
                        source,
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SchemaDefinition {
            entries,
            index,
            patterns,
        })
    }

    pub fn entries(&self) -> &[SchemaEntry] {
        &self.entries
    }

    pub fn entry(&self, path: &str) -> Option<&SchemaEntry> {
        self.index.get(path).map(|&i| &self.entries[i])
    }

    pub(crate) fn pattern_for(&self, path: &str) -> Option<&Regex> {
        self.index.get(path).and_then(|&i| self.patterns[i].as_ref())
    }

    /// Direct children of `parent` (`""` for the record root), sorted by path.
    pub fn children<'a>(&'a self, parent: &'a str) -> impl Iterator<Item = &'a SchemaEntry> + 'a {
        self.entries.iter().filter(move |e| e.parent().unwrap_or("") == parent)
    }

    pub fn is_leaf(&self, path: &str) -> bool {
        self.entry(path)
            .is_some_and(|e| e.value_kind != ValueKind::Section)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("schema entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SchemaError> {
        let entries = read_json_lines::<SchemaEntry>(text, "schema")?;
        SchemaDefinition::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, SchemaError> {
        let text = crate::config::read_to_string(path)?;
        SchemaDefinition::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }
}

const NON_BLANK: &str = r"\S";
const TRIMMED_NON_EMPTY: &str = r"^\S(?:.*\S)?$";

/// The canonical case schema covering every `CaseRecord` field.
pub fn default_schema() -> SchemaDefinition {
    use ValueKind::*;
    let e = SchemaEntry::new;
    let entries = vec![
        e("case_id", String).required().pattern(r"^[A-Za-z0-9][A-Za-z0-9_.:-]*$"),
        e("demographic", Section).required(),
        e("demographic.name", String).pattern(NON_BLANK),
        e("demographic.sex", Enum).values(&["female", "male", "unknown"]),
        e("demographic.age_years", Integer).range(0.0, Some(120.0)),
        e("demographic.age_min", Integer).range(0.0, Some(120.0)),
        e("demographic.age_max", Integer).range(0.0, Some(120.0)),
        e("demographic.height_min_cm", Integer).range(30.0, Some(250.0)),
        e("demographic.height_max_cm", Integer).range(30.0, Some(250.0)),
        e("demographic.weight_min_kg", Integer).range(1.0, Some(400.0)),
        e("demographic.weight_max_kg", Integer).range(1.0, Some(400.0)),
        e("demographic.race_ethnicity", String).pattern(NON_BLANK),
        e("spatial", Section).required(),
        e("spatial.last_seen_location", String).pattern(NON_BLANK),
        e("spatial.city", String).pattern(NON_BLANK),
        e("spatial.county", String).pattern(NON_BLANK),
        e("spatial.state", String).pattern(NON_BLANK),
        e("spatial.postal_code", String).pattern(r"^\d{5}(?:-\d{4})?$"),
        e("spatial.lat", Decimal).range(-90.0, Some(90.0)),
        e("spatial.lon", Decimal).range(-180.0, Some(180.0)),
        e("spatial.geocode_method", Enum).values(&["source_provided", "gazetteer", "none"]),
        e("spatial.geocode_plausible", Boolean),
        e("temporal", Section).required(),
        e("temporal.last_seen_ts", Timestamp),
        e("temporal.reported_missing_ts", Timestamp),
        e("temporal.timezone", String)
            .pattern(r"^(?:UTC|Z|[+-]\d{2}:\d{2}|[A-Za-z_]+(?:/[A-Za-z0-9_+-]+)+)$"),
        e("narrative_osint", Section).required(),
        e("narrative_osint.circumstances", String).pattern(NON_BLANK),
        e("narrative_osint.clothing_description", String).pattern(NON_BLANK),
        e("narrative_osint.distinctive_features", String).pattern(NON_BLANK),
        e("narrative_osint.movement_cues", List).pattern(TRIMMED_NON_EMPTY),
        e("outcome", Section).required(),
        e("outcome.status", Enum).values(&["missing", "located", "deceased", "unknown"]),
        e("outcome.status_ts", Timestamp),
        e("provenance", Section).required(),
        e("provenance.source_label", String).required().pattern(NON_BLANK),
        e("provenance.source_family", Enum)
            .values(&["registry_form", "bulletin", "narrative_profile", "unknown"]),
        e("provenance.extraction_path", Enum).required().values(&["rule", "llm"]),
        e("provenance.engine_used", Enum).values(&["layout", "basic", "ocr", "plaintext"]),
        e("provenance.document_id", String),
        e("provenance.field_origins", Map),
        e("provenance.ingest_ts", Timestamp),
        e("provenance.repair_count", Integer).range(0.0, None),
        e("provenance.warnings_count", Integer).range(0.0, None),
    ];
    SchemaDefinition::new(entries).expect("default schema is well-formed")
}

/// Every non-section path in `CaseRecord` declaration order.
pub fn canonical_leaf_order() -> &'static [String] {
    static ORDER: OnceLock<Vec<String>> = OnceLock::new();
    ORDER.get_or_init(|| {
        let mut out = Vec::new();
        let value = CaseRecord::empty("x").to_value();
        for (section, v) in value.as_object().expect("record is an object") {
            match v.as_object() {
                Some(fields) => {
                    out.extend(fields.keys().map(|k| format!("{section}.{k}")));
                }
                None => out.push(section.clone()),
            }
        }
        out
    })
}

/// Position of a leaf path in canonical order.
pub fn canonical_position(path: &str) -> Option<usize> {
    canonical_leaf_order().iter().position(|p| p == path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_has_sections_and_bounds() {
        let s = default_schema();
        for section in super::super::record::SECTIONS {
            let e = s.entry(section).unwrap();
            assert_eq!(e.value_kind, ValueKind::Section);
            assert!(e.required);
        }
        let lat = s.entry("spatial.lat").unwrap();
        assert_eq!(lat.value_kind, ValueKind::Decimal);
        assert!(!lat.required);
        assert_eq!(lat.numeric_range, Some((Some(-90.0), Some(90.0))));
        let id = s.entry("case_id").unwrap();
        assert_eq!(id.value_kind, ValueKind::String);
        assert!(id.required);
    }

    #[test]
    fn every_record_field_appears_once() {
        let s = default_schema();
        for path in canonical_leaf_order() {
            assert!(s.entry(path).is_some(), "missing {path}");
        }
        let leaves = s
            .entries()
            .iter()
            .filter(|e| e.value_kind != ValueKind::Section)
            .count();
        assert_eq!(leaves, canonical_leaf_order().len());
    }

    #[test]
    fn text_round_trip() {
        let s = default_schema();
        let text = s.to_text();
        let back = SchemaDefinition::from_text(&text).unwrap();
        assert_eq!(s, back);
        assert_eq!(text, back.to_text());
        let mut paths: Vec<_> = text.lines().map(|l| l.to_string()).collect();
        let before = paths.clone();
        paths.sort_by_key(|l| {
            serde_json::from_str::<SchemaEntry>(l).unwrap().field_path
        });
        assert_eq!(before, paths, "file is sorted by field path");
    }

    #[test]
    fn rejects_duplicates_and_orphans() {
        let dup = vec![
            SchemaEntry::new("a", ValueKind::String),
            SchemaEntry::new("a", ValueKind::String),
        ];
        assert!(matches!(
            SchemaDefinition::new(dup),
            Err(SchemaError::DuplicatePath(_))
        ));
        let orphan = vec![SchemaEntry::new("x.y", ValueKind::String)];
        assert!(matches!(
            SchemaDefinition::new(orphan),
            Err(SchemaError::Orphan(_))
        ));
    }

    #[test]
    fn canonical_order_starts_with_case_id() {
        let order = canonical_leaf_order();
        assert_eq!(order[0], "case_id");
        assert_eq!(order[1], "demographic.name");
        assert!(order.contains(&"provenance.field_origins".to_string()));
    }
}
