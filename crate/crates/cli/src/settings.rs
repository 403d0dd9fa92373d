use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// Resolves each tunable as flag, then config file, then built-in default, and keeps
/// the resolved values for the run manifest.
#[derive(Debug, Default, Clone)]
pub struct Settings {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|msg| CliError::Usage(format!("{}: {msg}", path.display())))
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut file = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
            let key = k.trim().replace('_', "-");
            if key.is_empty() {
                return Err(format!("line {}: empty key", n + 1));
            }
            file.insert(key, v.trim().to_string());
        }
        Ok(Self {
            file,
            resolved: BTreeMap::new(),
        })
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(s) => s
                    .parse()
                    .map_err(|e| CliError::Usage(format!("config key '{key}': {e}")))?,
                None => default,
            },
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    /// Config-file keys that no resolved setting consumed.
    pub fn unused(&self) -> Vec<&str> {
        self.file
            .keys()
            .filter(|k| !self.resolved.contains_key(*k))
            .map(String::as_str)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let mut s = Settings::parse("iters = 50\nwidth=64 # narrow\n\n").unwrap();
        assert_eq!(s.get("iters", Some(7usize), 1).unwrap(), 7);
        assert_eq!(s.get("width", None, 512usize).unwrap(), 64);
        assert_eq!(s.get("depth", None, 8usize).unwrap(), 8);
        assert_eq!(s.resolved()["iters"], "7");
        assert_eq!(s.resolved()["width"], "64");
        assert_eq!(s.resolved()["depth"], "8");
    }

    #[test]
    fn underscores_match_dashes() {
        let mut s = Settings::parse("batch_size = 16").unwrap();
        assert_eq!(s.get("batch-size", None, 1usize).unwrap(), 16);
        assert!(s.unused().is_empty());
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(Settings::parse("iters 50").is_err());
        assert!(Settings::parse(" = 3").is_err());
        let mut s = Settings::parse("iters = many").unwrap();
        assert!(s.get("iters", None, 1usize).is_err());
    }
}
