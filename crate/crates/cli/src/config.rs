//! Layered configuration: defaults, then a JSON file, then `USERBOOST_` environment
//! variables, then command-line flags, then `--set key=value` overrides.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

pub const ENV_PREFIX: &str = "USERBOOST_";

/// Parses a value as JSON, falling back to a plain string.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Recursively merges `patch` into `base`. Keys absent from `base` are rejected.
fn merge(base: &mut Value, patch: Value, path: &str) -> Result<(), CliError> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let child = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v, &child)?,
                    Some(slot) => *slot = v,
                    None => return Err(CliError::Usage(format!("unknown config key `{child}`"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// Sets a dotted key. Every segment must already exist.
pub fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("config key `{key}`: `{}` is not a section", parts[..i].join("."))))?;
        cur = obj.get_mut(*part).ok_or_else(|| CliError::Usage(format!("unknown config key `{key}`")))?;
    }
    *cur = value;
    Ok(())
}

fn has_dotted(root: &Value, key: &str) -> bool {
    let mut cur = root;
    for part in key.split('.') {
        match cur.get(part) {
            Some(v) => cur = v,
            None => return false,
        }
    }
    true
}

/// A run manifest can be fed back as a config file: its `config` member is used.
fn unwrap_manifest(v: Value) -> Value {
    match v {
        Value::Object(mut m) if m.contains_key("command") && m.contains_key("config_hash") => {
            m.remove("config").unwrap_or(Value::Object(Map::new()))
        }
        other => other,
    }
}

pub struct Layers<'a> {
    pub file: Option<Value>,
    pub env: Vec<(String, String)>,
    pub flags: Vec<(String, Value)>,
    pub sets: &'a [String],
}

/// Environment keys: `USERBOOST_TRAIN__MAX_EPOCHS` → `train.max_epochs`.
fn env_key(name: &str) -> Option<String> {
    name.strip_prefix(ENV_PREFIX).map(|k| k.to_ascii_lowercase().replace("__", "."))
}

pub fn resolve<T: Serialize + DeserializeOwned + Default>(layers: Layers<'_>) -> Result<(T, Value), CliError> {
    let mut v = serde_json::to_value(T::default()).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(file) = layers.file {
        merge(&mut v, unwrap_manifest(file), "")?;
    }
    // unrelated USERBOOST_ variables (e.g. dataset locations) are ignored
    for (name, raw) in &layers.env {
        if let Some(key) = env_key(name) {
            if has_dotted(&v, &key) {
                set_dotted(&mut v, &key, parse_value(raw))?;
            }
        }
    }
    for (key, value) in layers.flags {
        set_dotted(&mut v, &key, value)?;
    }
    for s in layers.sets {
        let (key, raw) = s.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
        set_dotted(&mut v, key.trim(), parse_value(raw.trim()))?;
    }
    let cfg: T = serde_json::from_value(v.clone()).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))?;
    // re-serialise so the recorded config is canonical
    let canonical = serde_json::to_value(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok((cfg, canonical))
}
