//! Flat key-value configuration file; command-line values take precedence.

use std::path::Path;

use serde::de::DeserializeOwned;
use tlpred_core::angular::Bandwidth;

use crate::error::CliError;

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "seeds",
    "input",
    "output",
    "target",
    "quantile",
    "qstar",
    "ndecomp",
    "bandwidth",
    "level",
    "window",
    "no-gpd-tail",
    "marginal",
    "train-fraction",
    "train-rows",
    "truth",
    "label-column",
    "region-level",
    "model",
    "subset",
    "density-out",
    "p",
    "q",
    "n",
    "n-train",
    "lo",
    "hi",
    "data",
    "scale",
];

#[derive(Debug, Default)]
pub struct Config {
    table: toml::Table,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|source| CliError::io(path, source))?;
        let table: toml::Table = text.parse()?;
        for (key, value) in &table {
            if !KNOWN_KEYS.contains(&key.replace('_', "-").as_str()) {
                return Err(CliError::Argument(format!("unknown config key '{key}'")));
            }
            if value.is_table() {
                return Err(CliError::Argument(format!("config key '{key}' must be a plain value")));
            }
        }
        Ok(Self { table })
    }

    fn raw(&self, key: &str) -> Option<&toml::Value> {
        self.table.get(key).or_else(|| self.table.get(&key.replace('-', "_")))
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.raw(key)
            .map(|v| v.clone().try_into().map_err(|e| CliError::Argument(format!("config key '{key}': {e}"))))
            .transpose()
    }

    /// Command-line value, else config value.
    pub fn or<T: DeserializeOwned>(&self, cli: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        match cli {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    pub fn flag(&self, cli: bool, key: &str) -> Result<bool, CliError> {
        Ok(cli || self.get::<bool>(key)?.unwrap_or(false))
    }

    pub fn bandwidth(&self, cli: Option<Bandwidth>) -> Result<Bandwidth, CliError> {
        if let Some(b) = cli {
            return Ok(b);
        }
        match self.raw("bandwidth") {
            None => Ok(Bandwidth::Auto),
            Some(toml::Value::String(s)) => parse_bandwidth(s).map_err(CliError::Argument),
            Some(toml::Value::Float(b)) => parse_bandwidth(&b.to_string()).map_err(CliError::Argument),
            Some(toml::Value::Integer(b)) => parse_bandwidth(&b.to_string()).map_err(CliError::Argument),
            Some(other) => Err(CliError::Argument(format!("config key 'bandwidth': unexpected value {other}"))),
        }
    }
}

pub fn parse_bandwidth(s: &str) -> Result<Bandwidth, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Bandwidth::Auto);
    }
    match s.parse::<f64>() {
        Ok(b) if b > 0.0 && b.is_finite() => Ok(Bandwidth::Fixed(b)),
        _ => Err(format!("bandwidth must be 'auto' or a positive number, got '{s}'")),
    }
}

/// Seeds as `1,2,5` or `1-5`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || format!("invalid seed list '{s}'");
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(format!("invalid seed list '{s}'"));
    }
    Ok(out)
}
