//! Command-line configuration file.
//!
//! Discovery is explicit: a `--config` path, else
//! `$XDG_CONFIG_HOME/vstash/config.toml` (falling back to
//! `~/.config/vstash/config.toml`). The working directory is never searched.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::limits::LimitsConfig;
use crate::retrieval::FusionConfig;

const KNOWN_KEYS: &[&str] = &["store_path", "profiles", "embedder", "slow_query_ms", "fusion", "limits"];

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default)]
pub struct CliConfig {
    pub store_path: Option<PathBuf>,
    /// Profile name to store path, for federated search.
    pub profiles: BTreeMap<String, PathBuf>,
    pub embedder: Option<String>,
    pub slow_query_ms: Option<f64>,
    pub fusion: FusionConfig,
    pub limits: LimitsConfig,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadedConfig {
    pub config: CliConfig,
    /// File the config came from, if any was found.
    pub source: Option<PathBuf>,
    pub warnings: Vec<String>,
}

impl CliConfig {
    /// Parses TOML text. Unknown top-level keys become warnings; malformed
    /// values inside known sections are errors.
    pub fn parse(text: &str, origin: &str) -> Result<(Self, Vec<String>)> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::parse(origin, e.message().to_owned()))?;
        let mut warnings = Vec::new();
        let mut known = toml::Table::new();
        for (key, value) in table {
            if KNOWN_KEYS.contains(&key.as_str()) {
                known.insert(key, value);
            } else {
                warnings.push(format!("{origin}: unknown config key {key:?} ignored"));
            }
        }
        let config: CliConfig = known
            .try_into()
            .map_err(|e: toml::de::Error| Error::parse(origin, e.message().to_owned()))?;
        config.fusion.validate()?;
        Ok((config, warnings))
    }

    /// The per-user config location, if a home directory is known.
    pub fn user_path() -> Option<PathBuf> {
        let base = std::env::var_os("XDG_CONFIG_HOME")
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .or_else(|| std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".config")))?;
        Some(base.join("vstash").join("config.toml"))
    }

    /// Loads `explicit` (which must exist) or the per-user file if present.
    pub fn discover(explicit: Option<&Path>) -> Result<LoadedConfig> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => match Self::user_path().filter(|p| p.is_file()) {
                Some(p) => p,
                None => return Ok(LoadedConfig::default()),
            },
        };
        let text = std::fs::read_to_string(&path)?;
        let (config, warnings) = Self::parse(&text, &path.display().to_string())?;
        Ok(LoadedConfig {
            config,
            source: Some(path),
            warnings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_sections_and_warns_on_unknown_keys() {
        let text = r#"
            store_path = "/tmp/a.db"
            embedder = "test:64"
            future_feature = true
            [profiles]
            work = "/tmp/work.db"
            [fusion]
            candidate_pool = 80
            [limits]
            max_k = 50
        "#;
        let (cfg, warnings) = CliConfig::parse(text, "cfg").unwrap();
        assert_eq!(cfg.store_path.as_deref(), Some(Path::new("/tmp/a.db")));
        assert_eq!(cfg.profiles["work"], PathBuf::from("/tmp/work.db"));
        assert_eq!(cfg.fusion.candidate_pool, 80);
        assert_eq!(cfg.fusion.rrf_k, 60);
        assert_eq!(cfg.limits.max_k, 50);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("future_feature"));
    }

    #[test]
    fn malformed_known_values_are_errors() {
        assert!(CliConfig::parse("store_path = 3", "cfg").is_err());
        assert!(CliConfig::parse("[fusion]\nrrf_kk = 3", "cfg").is_err());
        assert!(CliConfig::parse("not toml ===", "cfg").is_err());
    }

    #[test]
    fn explicit_path_must_exist() {
        let dir = tempfile::TempDir::new().unwrap();
        assert!(CliConfig::discover(Some(&dir.path().join("none.toml"))).is_err());
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "embedder = \"test\"").unwrap();
        let loaded = CliConfig::discover(Some(&path)).unwrap();
        assert_eq!(loaded.source.as_deref(), Some(path.as_path()));
        assert_eq!(loaded.config.embedder.as_deref(), Some("test"));
    }
}
