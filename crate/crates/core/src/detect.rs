//! Rule-based source identification from stable textual markers.

use std::collections::HashSet;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::config::{read_json_lines, read_to_string, ConfigError};
use crate::schema::SourceFamily;

pub const UNKNOWN_SOURCE: &str = "unknown";

fn default_min_markers() -> usize {
    2
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSignature {
    pub source_label: String,
    pub family: SourceFamily,
    pub markers: Vec<String>,
    #[serde(default = "default_min_markers")]
    pub min_markers: usize,
    #[serde(default)]
    pub priority: i32,
    #[serde(default = "default_true")]
    pub case_insensitive: bool,
    /// Header patterns that start a new case segment in multi-case documents.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub split_patterns: Vec<String>,
    /// Zone recorded in `temporal.timezone` for this source's timestamps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tz_default: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CompiledSignature {
    pub signature: SourceSignature,
    markers: Vec<Regex>,
    pub split: Vec<Regex>,
}

impl CompiledSignature {
    pub fn compile(signature: SourceSignature) -> Result<Self, ConfigError> {
        let label = &signature.source_label;
        if signature.markers.is_empty() {
            return Err(ConfigError::Invalid(format!("signature {label} has no markers")));
        }
        if signature.min_markers == 0 || signature.min_markers > signature.markers.len() {
            return Err(ConfigError::Invalid(format!(
                "signature {label}: min_markers {} must be in 1..={}",
                signature.min_markers,
                signature.markers.len()
            )));
        }
        let flags = if signature.case_insensitive { "(?mi)" } else { "(?m)" };
        let markers = signature
            .markers
            .iter()
            .map(|m| {
                Regex::new(&format!("{flags}{m}")).map_err(|e| {
                    ConfigError::Invalid(format!("signature {label}: bad marker {m:?}: {e}"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let split = crate::text::compile_split_patterns(&signature.split_patterns)
            .map_err(|e| ConfigError::Invalid(format!("signature {label}: {e}")))?;
        Ok(CompiledSignature {
            signature,
            markers,
            split,
        })
    }
}

/// Validated, immutable signature set.
#[derive(Debug, Clone, Default)]
pub struct SignatureSet {
    signatures: Vec<CompiledSignature>,
}

impl SignatureSet {
    pub fn new(signatures: Vec<SourceSignature>) -> Result<Self, ConfigError> {
        let mut seen = HashSet::new();
        for s in &signatures {
            if !seen.insert(s.source_label.clone()) {
                return Err(ConfigError::Invalid(format!(
                    "duplicate source label {}",
                    s.source_label
                )));
            }
        }
        let signatures = signatures
            .into_iter()
            .map(CompiledSignature::compile)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SignatureSet { signatures })
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        SignatureSet::new(read_json_lines(text, "signatures")?)
    }

    pub fn builtin() -> Self {
        SignatureSet::from_text(crate::config::defaults::SIGNATURES)
            .expect("bundled signatures are valid")
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CompiledSignature> {
        self.signatures.iter()
    }

    pub fn get(&self, label: &str) -> Option<&CompiledSignature> {
        self.signatures.iter().find(|s| s.signature.source_label == label)
    }
}

/// Reads and validates a signature file. Duplicate labels and invalid
/// marker patterns are configuration errors.
pub fn load_signatures(path: &Path) -> Result<SignatureSet, ConfigError> {
    SignatureSet::from_text(&read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub source_label: String,
    pub family: SourceFamily,
    /// `(marker index, char offset of first match)` for each matched marker.
    pub matched_markers: Vec<(usize, usize)>,
    pub score: usize,
}

impl DetectionResult {
    pub fn unknown() -> Self {
        DetectionResult {
            source_label: UNKNOWN_SOURCE.to_string(),
            family: SourceFamily::Unknown,
            matched_markers: Vec::new(),
            score: 0,
        }
    }

    pub fn is_unknown(&self) -> bool {
        self.family == SourceFamily::Unknown && self.source_label == UNKNOWN_SOURCE
    }
}

fn char_offset(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

/// Picks the qualifying signature with the highest distinct-marker score.
/// Ties go to the lower priority value, then the lexicographically smaller
/// label. Nothing qualifying yields `unknown`.
pub fn detect_source(text: &str, signatures: &SignatureSet) -> DetectionResult {
    let mut best: Option<(&CompiledSignature, Vec<(usize, usize)>)> = None;
    for sig in signatures.iter() {
        let matched: Vec<(usize, usize)> = sig
            .markers
            .iter()
            .enumerate()
            .filter_map(|(i, re)| re.find(text).map(|m| (i, char_offset(text, m.start()))))
            .collect();
        if matched.len() < sig.signature.min_markers {
            continue;
        }
        let better = match &best {
            None => true,
            Some((cur, cur_matched)) => {
                let a = (
                    std::cmp::Reverse(matched.len()),
                    sig.signature.priority,
                    &sig.signature.source_label,
                );
                let b = (
                    std::cmp::Reverse(cur_matched.len()),
                    cur.signature.priority,
                    &cur.signature.source_label,
                );
                a < b
            }
        };
        if better {
            best = Some((sig, matched));
        }
    }
    match best {
        Some((sig, matched)) => DetectionResult {
            source_label: sig.signature.source_label.clone(),
            family: sig.signature.family,
            score: matched.len(),
            matched_markers: matched,
        },
        None => DetectionResult::unknown(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(label: &str, family: SourceFamily, markers: &[&str], priority: i32) -> SourceSignature {
        SourceSignature {
            source_label: label.into(),
            family,
            markers: markers.iter().map(|m| m.to_string()).collect(),
            min_markers: 2,
            priority,
            case_insensitive: true,
            split_patterns: vec![],
            tz_default: None,
        }
    }

    #[test]
    fn registry_markers() {
        let set = SignatureSet::new(vec![sig(
            "registry",
            SourceFamily::RegistryForm,
            &["NamUs", "Date of Last Contact"],
            1,
        )])
        .unwrap();
        let text = "NamUs MP102335\nDate of Last Contact: July 1, 2023";
        let r = detect_source(text, &set);
        assert_eq!(r.source_label, "registry");
        assert_eq!(r.family, SourceFamily::RegistryForm);
        assert_eq!(r.score, 2);
        assert_eq!(r.matched_markers, vec![(0, 0), (1, 15)]);
    }

    #[test]
    fn no_hits_is_unknown() {
        let r = detect_source("plain prose", &SignatureSet::builtin());
        assert_eq!(r, DetectionResult::unknown());
        assert!(r.is_unknown());
    }

    #[test]
    fn below_min_markers_is_unknown() {
        let set = SignatureSet::new(vec![sig("a", SourceFamily::Bulletin, &["alpha", "beta"], 1)]).unwrap();
        assert!(detect_source("alpha only", &set).is_unknown());
    }

    #[test]
    fn tie_broken_by_priority_then_label() {
        let set = SignatureSet::new(vec![
            sig("second", SourceFamily::Bulletin, &["alpha", "beta"], 2),
            sig("first", SourceFamily::NarrativeProfile, &["alpha", "beta"], 1),
        ])
        .unwrap();
        assert_eq!(detect_source("alpha beta", &set).source_label, "first");
        let set = SignatureSet::new(vec![
            sig("zeta", SourceFamily::Bulletin, &["alpha", "beta"], 1),
            sig("eta", SourceFamily::Bulletin, &["alpha", "beta"], 1),
        ])
        .unwrap();
        assert_eq!(detect_source("alpha beta", &set).source_label, "eta");
    }

    #[test]
    fn higher_score_beats_priority() {
        let set = SignatureSet::new(vec![
            sig("low", SourceFamily::Bulletin, &["alpha", "beta"], 1),
            sig("high", SourceFamily::RegistryForm, &["alpha", "beta", "gamma"], 9),
        ])
        .unwrap();
        assert_eq!(detect_source("alpha beta gamma", &set).source_label, "high");
    }

    #[test]
    fn case_sensitivity_override() {
        let mut s = sig("cs", SourceFamily::Bulletin, &["ALPHA", "BETA"], 1);
        s.case_insensitive = false;
        let set = SignatureSet::new(vec![s]).unwrap();
        assert!(detect_source("alpha beta", &set).is_unknown());
        assert!(!detect_source("ALPHA BETA", &set).is_unknown());
    }

    #[test]
    fn builtin_covers_three_families() {
        let set = SignatureSet::builtin();
        assert!(set.len() >= 3);
        for family in SourceFamily::KNOWN {
            assert!(set.iter().any(|s| s.signature.family == family), "{family}");
        }
    }

    #[test]
    fn load_errors() {
        let dup = r#"{"source_label":"a","family":"bulletin","markers":["x","y"]}
{"source_label":"a","family":"bulletin","markers":["x","y"]}"#;
        assert!(matches!(SignatureSet::from_text(dup), Err(ConfigError::Invalid(_))));
        let bad = r#"{"source_label":"a","family":"bulletin","markers":["(","y"]}"#;
        assert!(SignatureSet::from_text(bad).is_err());
        let too_many = r#"{"source_label":"a","family":"bulletin","markers":["x"],"min_markers":2}"#;
        assert!(SignatureSet::from_text(too_many).is_err());
        assert!(SignatureSet::from_text("").unwrap().is_empty());
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("sigs.jsonl");
        std::fs::write(&empty, "").unwrap();
        let set = load_signatures(&empty).unwrap();
        assert!(detect_source("NamUs Date of Last Contact", &set).is_unknown());
        assert!(load_signatures(&dir.path().join("missing.jsonl")).is_err());
    }
}
