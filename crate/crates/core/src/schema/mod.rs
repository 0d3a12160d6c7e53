//! Canonical case schema, typed records, and the validator.

mod definition;
pub mod path;
mod record;
mod timestamp;
mod validate;

pub use definition::{
    canonical_leaf_order, canonical_position, default_schema, SchemaDefinition, SchemaEntry,
    SchemaError, ValueKind,
};
pub use path::{resolve_path, PathSyntaxError};
pub use record::{
    CaseRecord, CaseStatus, Demographic, Engine, ExtractionPath, FieldOrigin, GeocodeMethod,
    Narrative, Outcome, Provenance, Sex, SourceFamily, Spatial, Temporal, SECTIONS,
};
pub use timestamp::IsoTimestamp;
pub use validate::{validate, ValidationReport, ValidationViolation, ViolationCode};
