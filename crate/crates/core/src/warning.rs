//! Structured, non-fatal pipeline diagnostics.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Extract,
    Detect,
    Parse,
    Sanitize,
    Harmonize,
    Geocode,
    Validate,
    Repair,
    Emit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        }
    }
}

/// Registry of warning codes. Every emitted warning uses one of these.
pub mod codes {
    pub const LOW_QUALITY_TEXT: &str = "low_quality_text";
    pub const EXTRACTION_FAILED: &str = "extraction_failed";
    pub const EMPTY_SEGMENT: &str = "empty_segment";
    pub const UNKNOWN_SOURCE: &str = "unknown_source";
    pub const GENERIC_FALLBACK: &str = "generic_fallback";
    pub const DUPLICATE_MATCH: &str = "duplicate_match";
    pub const CASE_ID_FALLBACK: &str = "case_id_fallback";
    pub const BACKEND_ERROR: &str = "backend_error";
    pub const CANDIDATE_PARSE_FAILED: &str = "candidate_parse_failed";
    pub const DROPPED_KEY: &str = "dropped_key";
    pub const EMPTY_CANDIDATE: &str = "empty_candidate";
    pub const UNPARSEABLE_VALUE: &str = "unparseable_value";
    pub const IMPLAUSIBLE_VALUE: &str = "implausible_value";
    pub const UNKNOWN_ENUM: &str = "unknown_enum";
    pub const UNMAPPED_KEY: &str = "unmapped_key";
    pub const EMPTY_QUERY: &str = "empty_query";
    pub const AMBIGUOUS_PLACE: &str = "ambiguous_place";
    pub const NO_MATCH: &str = "no_match";
    pub const VALIDATION_VIOLATION: &str = "validation_violation";
    pub const REPAIR_ATTEMPT_FAILED: &str = "repair_attempt_failed";
    pub const REPAIR_REVERTED: &str = "repair_reverted";
    pub const REPAIR_EXHAUSTED: &str = "repair_exhausted";
    pub const DUPLICATE_CASE_ID: &str = "duplicate_case_id";

    pub const ALL: [&str; 23] = [
        LOW_QUALITY_TEXT,
        EXTRACTION_FAILED,
        EMPTY_SEGMENT,
        UNKNOWN_SOURCE,
        GENERIC_FALLBACK,
        DUPLICATE_MATCH,
        CASE_ID_FALLBACK,
        BACKEND_ERROR,
        CANDIDATE_PARSE_FAILED,
        DROPPED_KEY,
        EMPTY_CANDIDATE,
        UNPARSEABLE_VALUE,
        IMPLAUSIBLE_VALUE,
        UNKNOWN_ENUM,
        UNMAPPED_KEY,
        EMPTY_QUERY,
        AMBIGUOUS_PLACE,
        NO_MATCH,
        VALIDATION_VIOLATION,
        REPAIR_ATTEMPT_FAILED,
        REPAIR_REVERTED,
        REPAIR_EXHAUSTED,
        DUPLICATE_CASE_ID,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub stage: Stage,
    pub severity: Severity,
    pub code: String,
    pub message: String,
}

impl Warning {
    pub fn new(stage: Stage, severity: Severity, code: &str, message: impl Into<String>) -> Self {
        debug_assert!(codes::ALL.contains(&code), "unregistered warning code {code}");
        Warning {
            stage,
            severity,
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn warn(stage: Stage, code: &str, message: impl Into<String>) -> Self {
        Warning::new(stage, Severity::Warning, code, message)
    }
}
