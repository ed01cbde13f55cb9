//! Flat `key = value` text files with `#` comments.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
    source: String,
}

impl KeyValues {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("{source}:{}: expected key = value", n + 1)));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Config(format!("{source}:{}: empty key", n + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("{source}:{}: duplicate key '{k}'", n + 1)));
            }
        }
        Ok(KeyValues { entries, source: source.to_string() })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Sets or overrides a key (command-line flags take precedence).
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("{}: invalid value '{v}' for key '{key}'", self.source))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::Config(format!("{}: missing required key '{key}'", self.source)))
    }

    /// Rejects keys outside `allowed`.
    pub fn check_known(&self, allowed: &[&str]) -> Result<()> {
        let allowed: BTreeSet<&str> = allowed.iter().copied().collect();
        match self.entries.keys().find(|k| !allowed.contains(k.as_str())) {
            Some(k) => Err(Error::Config(format!("{}: unknown key '{k}'", self.source))),
            None => Ok(()),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_types() {
        let kv = KeyValues::parse("# header\nm = 20\nnoise=0.5 # trailing\n\nname = a b\n", "t").unwrap();
        assert_eq!(kv.require::<usize>("m").unwrap(), 20);
        assert_eq!(kv.get::<f64>("noise").unwrap(), Some(0.5));
        assert_eq!(kv.raw("name"), Some("a b"));
        assert_eq!(kv.get_or("absent", 3usize).unwrap(), 3);
        let err = kv.require::<usize>("absent").unwrap_err().to_string();
        assert!(err.contains("absent"));
        assert!(kv.require::<usize>("noise").is_err());
        assert!(kv.check_known(&["m", "noise"]).is_err());
        assert!(kv.check_known(&["m", "noise", "name"]).is_ok());
    }

    #[test]
    fn rejects_malformed() {
        assert!(KeyValues::parse("novalue\n", "t").is_err());
        assert!(KeyValues::parse("a=1\na=2\n", "t").is_err());
        assert!(KeyValues::parse("=1\n", "t").is_err());
    }
}
