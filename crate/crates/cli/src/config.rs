use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

/// Optional `gridflow.toml`:
///
/// ```toml
/// [store]
/// path = ".gridflow"
///
/// [run]
/// user = "ann:academic"
/// seed = 42
/// max_iterations = 100
///
/// [params]
/// theta = "0.3"
/// ```
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub store: StoreSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub params: BTreeMap<String, toml::Value>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreSection {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub user: Option<String>,
    pub seed: Option<u64>,
    pub max_iterations: Option<u32>,
}

impl Config {
    /// Reads `path`, or `./gridflow.toml` when it exists.
    pub fn load(path: Option<&Path>) -> Result<Config, String> {
        let default = Path::new("gridflow.toml");
        let path = match path {
            Some(p) => p,
            None if default.exists() => default,
            None => return Ok(Config::default()),
        };
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Parameter values as strings; TOML strings lose their quotes.
    pub fn params(&self) -> BTreeMap<String, String> {
        self.params
            .iter()
            .map(|(k, v)| {
                let s = match v {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                (k.clone(), s)
            })
            .collect()
    }
}
