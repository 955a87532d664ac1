//! Flat JSON run configuration. Model, training and labelling fields share
//! one namespace; keys absent from the file keep their defaults.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::model::ExtractorConfig;
use crate::oracle::OracleConfig;
use crate::training::TrainConfig;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "EXTSUM_CONFIG";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub model: ExtractorConfig,
    pub train: TrainConfig,
    pub oracle: OracleConfig,
}

fn object<T: Serialize>(value: &T) -> Map<String, Value> {
    match serde_json::to_value(value).expect("config types serialize to JSON") {
        Value::Object(m) => m,
        _ => unreachable!("config types are structs"),
    }
}

fn merged<T: Serialize + DeserializeOwned>(base: &T, overrides: &Map<String, Value>) -> Result<T, serde_json::Error> {
    let mut map = object(base);
    for (k, v) in overrides {
        if map.contains_key(k) {
            map.insert(k.clone(), v.clone());
        }
    }
    serde_json::from_value(Value::Object(map))
}

impl RunConfig {
    /// Every accepted key, sorted.
    pub fn known_keys() -> Vec<String> {
        let d = RunConfig::default();
        let mut keys: Vec<String> = [object(&d.model), object(&d.train), object(&d.oracle)].iter().flat_map(|m| m.keys().cloned()).collect();
        keys.sort();
        keys
    }

    /// Applies `overrides` on top of `self`. Unknown keys and ill-typed
    /// values are errors naming the key.
    pub fn apply(&self, overrides: &Map<String, Value>) -> anyhow::Result<RunConfig> {
        let known = RunConfig::known_keys();
        for (key, value) in overrides {
            if !known.contains(key) {
                bail!("unknown config key `{key}` (accepted keys: {})", known.join(", "));
            }
            let single: Map<String, Value> = std::iter::once((key.clone(), value.clone())).collect();
            let check = merged(&self.model, &single)
                .map(drop)
                .and_then(|_| merged(&self.train, &single).map(drop))
                .and_then(|_| merged(&self.oracle, &single).map(drop));
            check.map_err(|e| anyhow!("config key `{key}`: {e}"))?;
        }
        Ok(RunConfig {
            model: merged(&self.model, overrides)?,
            train: merged(&self.train, overrides)?,
            oracle: merged(&self.oracle, overrides)?,
        })
    }

    pub fn parse(text: &str) -> anyhow::Result<RunConfig> {
        let value: Value = serde_json::from_str(text).context("config is not valid JSON")?;
        let Value::Object(map) = value else {
            bail!("config must be a JSON object of key/value pairs");
        };
        RunConfig::default().apply(&map)
    }

    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        if !path.exists() {
            bail!("config file not found: {}", path.display());
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        RunConfig::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    /// Flat snapshot of every field, sorted by key.
    pub fn snapshot(&self) -> BTreeMap<String, Value> {
        object(&self.model).into_iter().chain(object(&self.train)).chain(object(&self.oracle)).collect()
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.oracle.cap == 0 {
            bail!("cap must be at least 1");
        }
        Ok(())
    }
}

/// Parses `key=value` overrides. Values are JSON when they parse as JSON,
/// bare strings otherwise.
pub fn parse_assignments(items: &[String]) -> anyhow::Result<Map<String, Value>> {
    let mut map = Map::new();
    for item in items {
        let (k, v) = item.split_once('=').ok_or_else(|| anyhow!("expected key=value, got `{item}`"))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        map.insert(k.trim().to_string(), value);
    }
    Ok(map)
}
