//! Flag/file merging. A value given on the command line wins over the config file; every
//! resolved value is recorded so artifacts can echo the configuration that produced them.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::Usage;

pub struct Resolver {
    file: toml::Table,
    resolved: BTreeMap<String, serde_json::Value>,
}

impl Resolver {
    /// Top-level keys apply to every command; a `[command]` table overrides them.
    pub fn load(path: Option<&Path>, command: &str) -> Result<Self> {
        let mut file = toml::Table::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let mut table: toml::Table =
                text.parse().map_err(|e| Usage(format!("config {}: {e}", path.display())))?;
            let section = match table.remove(command) {
                Some(toml::Value::Table(t)) => Some(t),
                _ => None,
            };
            for key in ["simulate", "fit", "prep", "predict"] {
                table.remove(key);
            }
            file = table;
            if let Some(section) = section {
                file.extend(section);
            }
        }
        let mut resolved = BTreeMap::new();
        resolved.insert("command".to_string(), serde_json::Value::String(command.to_string()));
        Ok(Self { file, resolved })
    }

    pub fn get<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(v) => Some(
                    v.clone()
                        .try_into()
                        .map_err(|e| Usage(format!("config key '{key}': {e}")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), serde_json::to_value(v)?);
        }
        Ok(value)
    }

    pub fn require<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>) -> Result<T> {
        self.get(key, flag)?
            .ok_or_else(|| Usage(format!("missing required setting '{key}' (flag --{} or config key)", key.replace('_', "-"))).into())
    }

    pub fn or<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        match self.get(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.resolved.insert(key.to_string(), serde_json::to_value(&default)?);
                Ok(default)
            }
        }
    }

    pub fn resolved(&self) -> &BTreeMap<String, serde_json::Value> {
        &self.resolved
    }
}
