//! Loading a scenario from disk with command-line overrides applied.

use eikf::sim::ScenarioConfig;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::Path;

/// Reads a scenario config, or the config recorded in a run manifest.
pub fn load(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<ScenarioConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| format!("{} is not valid JSON: {e}", path.display()))?;
    if value.get("config_hash").is_some() {
        value = value
            .get_mut("config")
            .map(Value::take)
            .ok_or_else(|| format!("{} looks like a manifest but has no config", path.display()))?;
    }
    let cfg: ScenarioConfig =
        serde_json::from_value(value).map_err(|e| format!("{}: {e}", path.display()))?;

    // Round-trip through the fully populated form so every key can be overridden.
    let mut full = serde_json::to_value(&cfg).map_err(|e| e.to_string())?;
    for o in overrides {
        apply_override(&mut full, o)?;
    }
    let mut cfg: ScenarioConfig = serde_json::from_value(full).map_err(|e| format!("after overrides: {e}"))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Sets a dotted `key=value` path; the value is JSON if it parses as such, a string otherwise.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), String> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| format!("override {spec:?} is not of the form key=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for part in key.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| format!("override key {key:?} does not name a config field"))?;
    }
    *node = value;
    Ok(())
}

/// SHA-256 of the config serialised with sorted keys.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    // serde_json::Value keeps object keys ordered, which makes the encoding canonical.
    let value = serde_json::to_value(cfg).expect("config serialises");
    let canonical = serde_json::to_string(&value).expect("value serialises");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn nested_override() {
        let mut v = json!({"a": {"b": 1, "c": [1, 2]}});
        apply_override(&mut v, "a.b=2.5").unwrap();
        apply_override(&mut v, "a.c.1=7").unwrap();
        assert_eq!(v, json!({"a": {"b": 2.5, "c": [1, 7]}}));
        assert!(apply_override(&mut v, "a.d=1").is_err());
        assert!(apply_override(&mut v, "a.b").is_err());
    }

    #[test]
    fn hash_ignores_field_order() {
        let cfg = ScenarioConfig::vio();
        let mut v = serde_json::to_value(&cfg).unwrap();
        let obj = v.as_object_mut().unwrap();
        let reordered: serde_json::Map<String, Value> = obj.iter().rev().map(|(k, v)| (k.clone(), v.clone())).collect();
        let text = serde_json::to_string(&Value::Object(reordered)).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(config_hash(&back), config_hash(&cfg));
    }
}
