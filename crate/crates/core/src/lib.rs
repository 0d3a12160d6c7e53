//! Document-to-schema pipeline for missing-person case documents.
//!
//! Documents go through text acquisition, source detection, and one or both
//! extraction paths (deterministic label rules, or a schema-guided text
//! generation backend with validator-guided repair). Both paths share
//! harmonization, gazetteer geocoding, and validation, and emit synchronized
//! JSONL and CSV outputs with per-field provenance.

pub mod config;
pub mod detect;
pub mod emit;
pub mod eval;
pub mod geocode;
pub mod harmonize;
pub mod llm;
pub mod parallel;
pub mod pipeline;
pub mod schema;
pub mod synth;
pub mod rules;
pub mod text;
pub mod warning;
