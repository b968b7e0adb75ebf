use std::path::Path;

use serde_json::{Map, Value};
use syllabus::harness::RunConfig;
use syllabus::{Error, Result};

/// Sets `key` (dot-separated path) in `doc` to `value`, parsed as JSON when
/// possible and taken as a string otherwise.
pub fn apply_set(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {assignment:?}")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("empty path segment in {key:?}")));
        }
        if !node.is_object() {
            *node = Value::Object(Map::new());
        }
        let obj = node.as_object_mut().expect("just made an object");
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Object(Map::new()));
    }
    Ok(())
}

/// Reads the config file (or an empty document) and applies `--set`s.
pub fn load(path: Option<&Path>, sets: &[String]) -> Result<RunConfig> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("reading {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Map::new()),
    };
    for s in sets {
        apply_set(&mut doc, s)?;
    }
    RunConfig::from_json(&doc.to_string())
}
