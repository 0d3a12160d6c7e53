//! Typed case record.
//!
//! Struct field order is the canonical column and key order used by every
//! output artifact, so fields must not be reordered casually.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize};

fn null_as_default<'de, D, T>(de: D) -> Result<T, D::Error>
where
    D: Deserializer<'de>,
    T: Default + Deserialize<'de>,
{
    Ok(Option::<T>::deserialize(de)?.unwrap_or_default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Female,
    Male,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeocodeMethod {
    SourceProvided,
    Gazetteer,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    #[default]
    Missing,
    Located,
    Deceased,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFamily {
    RegistryForm,
    Bulletin,
    NarrativeProfile,
    #[default]
    Unknown,
}

impl SourceFamily {
    pub const KNOWN: [SourceFamily; 3] = [
        SourceFamily::RegistryForm,
        SourceFamily::Bulletin,
        SourceFamily::NarrativeProfile,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceFamily::RegistryForm => "registry_form",
            SourceFamily::Bulletin => "bulletin",
            SourceFamily::NarrativeProfile => "narrative_profile",
            SourceFamily::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "registry_form" => Some(SourceFamily::RegistryForm),
            "bulletin" => Some(SourceFamily::Bulletin),
            "narrative_profile" => Some(SourceFamily::NarrativeProfile),
            "unknown" => Some(SourceFamily::Unknown),
            _ => None,
        }
    }
}

impl std::fmt::Display for SourceFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionPath {
    #[default]
    Rule,
    Llm,
}

impl ExtractionPath {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtractionPath::Rule => "rule",
            ExtractionPath::Llm => "llm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Layout,
    Basic,
    Ocr,
    #[default]
    Plaintext,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Layout => "layout",
            Engine::Basic => "basic",
            Engine::Ocr => "ocr",
            Engine::Plaintext => "plaintext",
        }
    }
}

/// Where a harmonized field value was read from: segment and character span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct FieldOrigin {
    pub segment_index: usize,
    pub char_start: usize,
    pub char_end: usize,
}

impl From<[usize; 3]> for FieldOrigin {
    fn from(v: [usize; 3]) -> Self {
        FieldOrigin {
            segment_index: v[0],
            char_start: v[1],
            char_end: v[2],
        }
    }
}

impl From<FieldOrigin> for [usize; 3] {
    fn from(o: FieldOrigin) -> Self {
        [o.segment_index, o.char_start, o.char_end]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Demographic {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default, deserialize_with = "null_as_default")]
    pub sex: Sex,
    #[serde(default)]
    pub age_years: Option<i64>,
    #[serde(default)]
    pub age_min: Option<i64>,
    #[serde(default)]
    pub age_max: Option<i64>,
    #[serde(default)]
    pub height_min_cm: Option<i64>,
    #[serde(default)]
    pub height_max_cm: Option<i64>,
    #[serde(default)]
    pub weight_min_kg: Option<i64>,
    #[serde(default)]
    pub weight_max_kg: Option<i64>,
    #[serde(default)]
    pub race_ethnicity: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spatial {
    #[serde(default)]
    pub last_seen_location: Option<String>,
    #[serde(default)]
    pub city: Option<String>,
    #[serde(default)]
    pub county: Option<String>,
    #[serde(default)]
    pub state: Option<String>,
    #[serde(default)]
    pub postal_code: Option<String>,
    #[serde(default)]
    pub lat: Option<f64>,
    #[serde(default)]
    pub lon: Option<f64>,
    #[serde(default, deserialize_with = "null_as_default")]
    pub geocode_method: GeocodeMethod,
    #[serde(default)]
    pub geocode_plausible: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Temporal {
    #[serde(default)]
    pub last_seen_ts: Option<String>,
    #[serde(default)]
    pub reported_missing_ts: Option<String>,
    #[serde(default)]
    pub timezone: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Narrative {
    #[serde(default)]
    pub circumstances: Option<String>,
    #[serde(default)]
    pub clothing_description: Option<String>,
    #[serde(default)]
    pub distinctive_features: Option<String>,
    #[serde(default, deserialize_with = "null_as_default")]
    pub movement_cues: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outcome {
    #[serde(default, deserialize_with = "null_as_default")]
    pub status: CaseStatus,
    #[serde(default)]
    pub status_ts: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    #[serde(default, deserialize_with = "null_as_default")]
    pub source_label: String,
    #[serde(default, deserialize_with = "null_as_default")]
    pub source_family: SourceFamily,
    #[serde(default, deserialize_with = "null_as_default")]
    pub extraction_path: ExtractionPath,
    #[serde(default, deserialize_with = "null_as_default")]
    pub engine_used: Engine,
    #[serde(default, deserialize_with = "null_as_default")]
    pub document_id: String,
    #[serde(default, deserialize_with = "null_as_default")]
    pub field_origins: BTreeMap<String, FieldOrigin>,
    #[serde(default)]
    pub ingest_ts: Option<String>,
    #[serde(default, deserialize_with = "null_as_default")]
    pub repair_count: u32,
    #[serde(default, deserialize_with = "null_as_default")]
    pub warnings_count: u32,
}

/// A schema-aligned case. All six sections are always serialized, even when
/// every field inside them is null.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseRecord {
    pub case_id: String,
    pub demographic: Demographic,
    pub spatial: Spatial,
    pub temporal: Temporal,
    pub narrative_osint: Narrative,
    pub outcome: Outcome,
    pub provenance: Provenance,
}

impl CaseRecord {
    pub fn empty(case_id: impl Into<String>) -> Self {
        CaseRecord {
            case_id: case_id.into(),
            ..Default::default()
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("case record serializes")
    }

    pub fn from_value(value: &serde_json::Value) -> Result<Self, serde_json::Error> {
        CaseRecord::deserialize(value)
    }
}

/// Section names in canonical order.
pub const SECTIONS: [&str; 6] = [
    "demographic",
    "spatial",
    "temporal",
    "narrative_osint",
    "outcome",
    "provenance",
];
