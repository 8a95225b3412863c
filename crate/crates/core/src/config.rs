//! Flat `key = value` configuration files.
//!
//! One assignment per line; blank lines and lines starting with `#` are
//! ignored. Keys are case-sensitive and may not repeat.

use std::path::Path;

use crate::error::{Error, Result};

/// Parsed assignments in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: Vec<(String, String, usize)>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String, usize)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(line_no, format!("expected key = value, got {line:?}")))?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::parse(line_no, "empty key"));
            }
            if entries.iter().any(|(k, _, _)| k == key) {
                return Err(Error::parse(line_no, format!("duplicate key {key:?}")));
            }
            entries.push((key.to_string(), value.to_string(), line_no));
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| e.with_source(path))
    }

    /// Adds or replaces an assignment, e.g. from a command-line override.
    pub fn set(&mut self, key: &str, value: &str) {
        match self.entries.iter_mut().find(|(k, _, _)| k == key) {
            Some(entry) => entry.1 = value.to_string(),
            None => self.entries.push((key.to_string(), value.to_string(), 0)),
        }
    }

    /// Parses a `key=value` override string.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::input(format!("override {assignment:?} is not key=value")))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::input(format!("override {assignment:?} has an empty key")));
        }
        self.set(k, v.trim());
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v, _)| (k.as_str(), v.as_str()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, _)| v.as_str())
    }

    /// Fails on the first key not in `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.iter().find(|(k, _, _)| !allowed.contains(&k.as_str())) {
            Some((k, _, _)) => Err(Error::input(format!("unknown config key {k:?}"))),
            None => Ok(()),
        }
    }
}

/// Parses a config value, naming the key on failure.
pub fn parse_value<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::input(format!("config key {key:?}: cannot parse {value:?}")))
}
