//! Line-oriented configuration files.
//!
//! Every configuration file (schema, signatures, rule sets, key mappings) is
//! JSON Lines: one object per line. Blank lines and lines starting with `#`
//! are ignored.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{what} line {line}: {message}")]
    Parse {
        what: String,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

pub fn read_to_string(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json_lines<T: DeserializeOwned>(text: &str, what: &str) -> Result<Vec<T>, ConfigError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let item = serde_json::from_str(trimmed).map_err(|e| ConfigError::Parse {
            what: what.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Default configuration shipped with the crate.
pub mod defaults {
    pub const SIGNATURES: &str = include_str!("../config/signatures.jsonl");
    pub const RULES_REGISTRY_FORM: &str = include_str!("../config/rules/registry_form.jsonl");
    pub const RULES_BULLETIN: &str = include_str!("../config/rules/bulletin.jsonl");
    pub const RULES_NARRATIVE_PROFILE: &str =
        include_str!("../config/rules/narrative_profile.jsonl");
    pub const MAPPINGS: &str = include_str!("../config/mappings/default.jsonl");
    pub const GAZETTEER: &str = include_str!("../config/gazetteer.tsv");
    pub const REGIONS: &str = include_str!("../config/regions.tsv");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(serde::Deserialize, Debug, PartialEq)]
    struct Item {
        a: u32,
    }

    #[test]
    fn skips_comments_and_blanks() {
        let items: Vec<Item> = read_json_lines("# hi\n\n{\"a\":1}\n  {\"a\":2}\n", "t").unwrap();
        assert_eq!(items, vec![Item { a: 1 }, Item { a: 2 }]);
    }

    #[test]
    fn reports_line_number() {
        let err = read_json_lines::<Item>("{\"a\":1}\n{oops}\n", "t").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }));
    }
}
