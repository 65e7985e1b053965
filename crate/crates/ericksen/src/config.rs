//! Flat key-value configuration files with dotted section names.
//!
//! Format: one `key = value` pair per line, `#` starts a comment,
//! values may be double-quoted (required when they contain spaces,
//! e.g. vectors like `electric.e = "0 1 0"`).  Serialization sorts
//! keys so files diff cleanly.

use crate::error::{Error, Result};
use std::collections::BTreeMap;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigMap {
    map: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<ConfigMap> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            let mut value = value.trim();
            if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
                value = &value[1..value.len() - 1];
            }
            map.insert(key.to_string(), value.to_string());
        }
        Ok(ConfigMap { map })
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            if v.contains(' ') || v.is_empty() {
                out.push_str(&format!("{k} = \"{v}\"\n"));
            } else {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not a number"))),
        }
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not a count"))),
        }
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => match v.as_str() {
                "true" | "on" | "yes" | "1" => Ok(Some(true)),
                "false" | "off" | "no" | "0" => Ok(Some(false)),
                _ => Err(Error::Config(format!("key '{key}': '{v}' is not a flag"))),
            },
        }
    }

    /// Space-separated list of numbers, e.g. `"0 1 0"`.
    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => {
                let vals: std::result::Result<Vec<f64>, _> =
                    v.split_whitespace().map(|t| t.parse::<f64>()).collect();
                vals.map(Some)
                    .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not a number list")))
            }
        }
    }
}
