//! Layered settings: built-in defaults, then the JSON config file, then
//! command-line flags. The merged object is deserialized into the settings
//! type of the subcommand and echoed into its summary.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub fn load(path: Option<&Path>) -> CliResult<Map<String, Value>> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(CliError::Config(format!("{} must hold a JSON object", path.display()))),
        Err(e) => Err(CliError::Config(format!("{}: {e}", path.display()))),
    }
}

/// Objects merge key by key; anything else is replaced.
pub fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (key, v) in o {
                match b.get_mut(key) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(key.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// Builds a flags object from the options that were given.
#[derive(Default)]
pub struct Flags(Map<String, Value>);

impl Flags {
    pub fn set<T: Serialize>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.0
                .insert(key.to_string(), serde_json::to_value(v).expect("flag values serialize"));
        }
        self
    }

    /// Sets `outer.inner`, keeping any other keys of `outer`.
    pub fn set_nested<T: Serialize>(&mut self, path: &[&str], value: Option<T>) -> &mut Self {
        let Some(v) = value else {
            return self;
        };
        let mut nested = serde_json::to_value(v).expect("flag values serialize");
        for key in path[1..].iter().rev() {
            let mut m = Map::new();
            m.insert(key.to_string(), nested);
            nested = Value::Object(m);
        }
        let mut top = Value::Object(std::mem::take(&mut self.0));
        let mut m = Map::new();
        m.insert(path[0].to_string(), nested);
        merge(&mut top, &Value::Object(m));
        let Value::Object(map) = top else { unreachable!() };
        self.0 = map;
        self
    }
}

/// `k` from the flag, then the config file, then `fallback`.
pub fn resolve_k(flag: Option<usize>, file: &Map<String, Value>, fallback: usize) -> CliResult<usize> {
    if let Some(k) = flag {
        return Ok(k);
    }
    match file.get("k") {
        None => Ok(fallback),
        Some(v) => v
            .as_u64()
            .map(|k| k as usize)
            .ok_or_else(|| CliError::Config(format!("k must be a positive integer, got {v}"))),
    }
}

/// Merges the three layers and deserializes. Top-level keys of the config
/// file must all be known to the defaults.
pub fn resolve<T: DeserializeOwned + Serialize>(
    defaults: Value,
    file: &Map<String, Value>,
    flags: Flags,
) -> CliResult<(T, Value)> {
    let mut merged = defaults;
    if let Value::Object(known) = &merged {
        if let Some(bad) = file.keys().find(|key| !known.contains_key(*key)) {
            return Err(CliError::Config(format!("unknown key {bad:?}")));
        }
    }
    merge(&mut merged, &Value::Object(file.clone()));
    merge(&mut merged, &Value::Object(flags.0));
    let settings: T = serde_json::from_value(merged).map_err(|e| CliError::Config(e.to_string()))?;
    let echo = serde_json::to_value(&settings).expect("settings serialize");
    Ok((settings, echo))
}
