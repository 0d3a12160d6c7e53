use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed field path {path:?}: {reason}")]
pub struct PathSyntaxError {
    pub path: String,
    pub reason: &'static str,
}

/// Splits a dot path into segments, rejecting empty segments and whitespace.
pub fn parse_path(path: &str) -> Result<Vec<&str>, PathSyntaxError> {
    let err = |reason| PathSyntaxError {
        path: path.to_string(),
        reason,
    };
    if path.is_empty() {
        return Err(err("empty path"));
    }
    let segments: Vec<&str> = path.split('.').collect();
    for seg in &segments {
        if seg.is_empty() {
            return Err(err("empty segment"));
        }
        if seg.chars().any(char::is_whitespace) {
            return Err(err("whitespace in segment"));
        }
    }
    Ok(segments)
}

/// Looks up `path` in `record`. `Ok(None)` is the absent marker; a present
/// JSON null comes back as `Ok(Some(&Value::Null))`.
pub fn resolve_path<'a>(record: &'a Value, path: &str) -> Result<Option<&'a Value>, PathSyntaxError> {
    let mut cur = record;
    for seg in parse_path(path)? {
        let next = match cur {
            Value::Object(map) => map.get(seg),
            Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get(i)),
            _ => None,
        };
        match next {
            Some(v) => cur = v,
            None => return Ok(None),
        }
    }
    Ok(Some(cur))
}

/// Mutable lookup; same addressing rules as [`resolve_path`].
pub fn resolve_path_mut<'a>(record: &'a mut Value, path: &str) -> Option<&'a mut Value> {
    let mut cur = record;
    for seg in parse_path(path).ok()? {
        cur = match cur {
            Value::Object(map) => map.get_mut(seg)?,
            Value::Array(items) => items.get_mut(seg.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(cur)
}

/// Writes `value` at an object path, creating intermediate objects. Returns
/// false when an intermediate node exists but is not an object.
pub fn set_path(record: &mut Value, path: &str, value: Value) -> bool {
    let Ok(segments) = parse_path(path) else {
        return false;
    };
    let (last, parents) = segments.split_last().expect("non-empty path");
    let mut cur = record;
    for seg in parents {
        if cur.is_null() {
            *cur = Value::Object(Default::default());
        }
        let Value::Object(map) = cur else {
            return false;
        };
        cur = map
            .entry(seg.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    if cur.is_null() {
        *cur = Value::Object(Default::default());
    }
    match cur {
        Value::Object(map) => {
            map.insert(last.to_string(), value);
            true
        }
        _ => false,
    }
}

/// Removes the value at an object path, returning it.
pub fn remove_path(record: &mut Value, path: &str) -> Option<Value> {
    let segments = parse_path(path).ok()?;
    let (last, parents) = segments.split_last()?;
    let mut cur = record;
    for seg in parents {
        cur = cur.as_object_mut()?.get_mut(*seg)?;
    }
    cur.as_object_mut()?.shift_remove(*last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn direct_lookup() {
        let r = json!({"spatial": {"lat": 38.47}});
        assert_eq!(resolve_path(&r, "spatial.lat").unwrap(), Some(&json!(38.47)));
    }

    #[test]
    fn list_index() {
        let r = json!({"narrative_osint": {"movement_cues": ["Maryland", "Delaware"]}});
        assert_eq!(
            resolve_path(&r, "narrative_osint.movement_cues.1").unwrap(),
            Some(&json!("Delaware"))
        );
        assert_eq!(resolve_path(&r, "narrative_osint.movement_cues.7").unwrap(), None);
    }

    #[test]
    fn absent_and_null_are_distinct() {
        let r = json!({"a": null});
        assert_eq!(resolve_path(&r, "nonexistent.key").unwrap(), None);
        assert_eq!(resolve_path(&r, "a").unwrap(), Some(&Value::Null));
    }

    #[test]
    fn malformed_paths() {
        let r = json!({});
        assert!(resolve_path(&r, "").is_err());
        assert!(resolve_path(&r, "a..b").is_err());
        assert!(resolve_path(&r, ".a").is_err());
        assert!(resolve_path(&r, "a b").is_err());
    }

    #[test]
    fn set_and_remove() {
        let mut r = json!({});
        assert!(set_path(&mut r, "outcome.status", json!("unknown")));
        assert_eq!(r, json!({"outcome": {"status": "unknown"}}));
        assert_eq!(remove_path(&mut r, "outcome.status"), Some(json!("unknown")));
        assert_eq!(r, json!({"outcome": {}}));
        let mut scalar = json!({"a": 1});
        assert!(!set_path(&mut scalar, "a.b", json!(2)));
    }
}
