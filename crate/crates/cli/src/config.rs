//! Flat `key = value` configuration files.
//!
//! One setting per line, `#` starts a comment, keys mirror the long flag
//! names (`out-dir`, `dist-a`, ...; underscores are accepted in place of
//! hyphens). Boolean keys take `true`/`false`. A sweep grid lists several
//! distributions separated by `;`, e.g. `dist = beta:1,1; r:10; l:1,1`.
//! Flags given on the command line replace the corresponding file keys.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

/// Every key the tool understands, in documentation order.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "q",
    "out",
    "out-dir",
    "threads",
    "model",
    "n",
    "m",
    "k",
    "dist",
    "dist-a",
    "dist-b",
    "dist-s",
    "normalize",
    "pl",
    "los-root",
    "keyhole-index",
    "clusters",
    "cluster-scalar",
    "cdf",
    "vary",
    "values",
    "models",
    "ks",
    "calibrate",
    "calibration-q",
];

/// Resolved settings: file keys overlaid by command-line flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn canonical_key(key: &str) -> String {
    key.trim().replace('_', "-").to_ascii_lowercase()
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", lineno + 1)))?;
            let key = canonical_key(key);
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("config line {}: unknown key `{key}`", lineno + 1)));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!("config line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        Ok(Settings { values })
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Settings::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                Settings::parse(&text)
            }
        }
    }

    /// Overrides `key` with a flag value when the flag was given.
    pub fn set<T: ToString>(&mut self, key: &str, value: Option<T>) {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered key {key}");
        if let Some(v) = value {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    /// Switch flags can only turn a setting on.
    pub fn set_flag(&mut self, key: &str, on: bool) {
        if on {
            self.set(key, Some("true"));
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parse_value<T>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key)
            .map(|raw| raw.trim().parse::<T>().map_err(|e| invalid(key, raw, e)))
            .transpose()
    }

    pub fn parse_bool(&self, key: &str) -> Result<bool, CliError> {
        match self.get(key).map(str::trim) {
            None | Some("false") | Some("0") | Some("no") => Ok(false),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some(other) => Err(invalid(key, other, "expected true or false")),
        }
    }

    pub fn parse_list<T>(&self, key: &str, sep: char) -> Result<Option<Vec<T>>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some(raw) = self.get(key) else { return Ok(None) };
        let items = raw
            .split(sep)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|e| invalid(key, s, e)))
            .collect::<Result<Vec<T>, _>>()?;
        if items.is_empty() {
            return Err(invalid(key, raw, "list is empty"));
        }
        Ok(Some(items))
    }
}

fn invalid(key: &str, raw: &str, err: impl Display) -> CliError {
    CliError::Validation(format!("invalid {key} `{raw}`: {err}"))
}
