//! Plain `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Keys are case-sensitive; a key
//! given twice keeps the last value.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, ParseError, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<KeyValues> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(KeyValues { entries })
    }

    pub fn load(path: &Path) -> Result<KeyValues> {
        KeyValues::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::from(ParseError::new("config value", format!("{key} = {v}")))))
            .transpose()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Parses `a:1.5, b:2` into weighted entries.
pub fn parse_weights(text: &str) -> Result<Vec<(String, f64)>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (name, w) = item.rsplit_once(':').ok_or_else(|| ParseError::new("weighted entry", item))?;
            let w: f64 = w.trim().parse().map_err(|_| ParseError::new("weight", item))?;
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("weight of {name:?} must be positive")));
            }
            Ok((name.trim().to_string(), w))
        })
        .collect()
}

pub fn render_weights(items: &[(String, f64)]) -> String {
    items.iter().map(|(k, w)| format!("{k}:{w}")).collect::<Vec<_>>().join(", ")
}

/// Settings shared by the pipeline commands; CLI flags override file values.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub endpoint: String,
    pub tokens: Vec<String>,
    pub interval_secs: f64,
    pub ids_path: Option<PathBuf>,
    pub raw_dir: PathBuf,
    pub dehydrated_dir: PathBuf,
    pub archive_dir: PathBuf,
    pub index_dir: PathBuf,
    pub corpus_spec: Option<PathBuf>,
    pub bucket: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            endpoint: "http://127.0.0.1:8080".into(),
            tokens: vec!["local".into()],
            interval_secs: 5.0,
            ids_path: None,
            raw_dir: "raw".into(),
            dehydrated_dir: "dehydrated".into(),
            archive_dir: "archive".into(),
            index_dir: "index".into(),
            corpus_spec: None,
            bucket: "week".into(),
        }
    }
}

impl PipelineConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        for key in kv.keys() {
            let v = kv.get(key).unwrap_or_default();
            match key {
                "endpoint" => cfg.endpoint = v.to_string(),
                "tokens" => cfg.tokens = v.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect(),
                "interval" => cfg.interval_secs = kv.parsed("interval")?.unwrap_or(cfg.interval_secs),
                "ids" => cfg.ids_path = Some(v.into()),
                "raw" => cfg.raw_dir = v.into(),
                "dehydrated" => cfg.dehydrated_dir = v.into(),
                "archive" => cfg.archive_dir = v.into(),
                "index" => cfg.index_dir = v.into(),
                "corpus_spec" => cfg.corpus_spec = Some(v.into()),
                "bucket" => cfg.bucket = v.to_string(),
                other => return Err(Error::invalid(format!("unknown config key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.interval_secs > 0.0) {
            return Err(Error::invalid("interval must be positive"));
        }
        let paths = [&self.raw_dir, &self.dehydrated_dir, &self.archive_dir, &self.index_dir];
        for (i, a) in paths.iter().enumerate() {
            if paths[i + 1..].contains(a) {
                return Err(Error::invalid(format!("path {} used for two roles", a.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values() {
        let kv = KeyValues::parse("# c\nseed = 7\n\nname=a = b\n").unwrap();
        assert_eq!(kv.get("seed"), Some("7"));
        assert_eq!(kv.get("name"), Some("a = b"));
        assert_eq!(kv.parsed::<u64>("seed").unwrap(), Some(7));
        assert!(kv.parsed::<u64>("name").is_err());
        assert!(KeyValues::parse("novalue").is_err());
        assert_eq!(KeyValues::parse(&kv.render()).unwrap(), kv);
    }

    #[test]
    fn weights() {
        let w = parse_weights("en:0.9, ja:0.1").unwrap();
        assert_eq!(w, vec![("en".to_string(), 0.9), ("ja".to_string(), 0.1)]);
        assert!(parse_weights("en:0").is_err());
        assert!(parse_weights("en").is_err());
        assert_eq!(parse_weights(&render_weights(&w)).unwrap(), w);
    }

    #[test]
    fn pipeline_config() {
        let kv = KeyValues::parse("interval = 2\narchive = a\nindex = i\ntokens = x, y").unwrap();
        let cfg = PipelineConfig::from_kv(&kv).unwrap();
        assert_eq!(cfg.interval_secs, 2.0);
        assert_eq!(cfg.tokens, ["x", "y"]);
        assert!(PipelineConfig::from_kv(&KeyValues::parse("archive = x\nindex = x").unwrap()).is_err());
        assert!(PipelineConfig::from_kv(&KeyValues::parse("interval = 0").unwrap()).is_err());
        assert!(PipelineConfig::from_kv(&KeyValues::parse("bogus = 1").unwrap()).is_err());
    }
}
