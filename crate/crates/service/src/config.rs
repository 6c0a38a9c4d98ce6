use std::path::{Path, PathBuf};

use reaas_core::data::ImageShape;
use reaas_core::f2i::SearchConfig;
use serde::{Deserialize, Serialize};

pub const ENV_LISTEN_ADDRESS: &str = "REAAS_LISTEN_ADDRESS";
pub const ENV_MODEL_PATH: &str = "REAAS_MODEL_PATH";

/// Server settings, read from TOML:
///
/// ```toml
/// model_path = "encoder.bin"
/// listen_address = "127.0.0.1:8080"
/// expected_input = { height = 16, width = 16, channels = 1 }
///
/// [search]
/// rho_low_init = 0.0
/// rho_high_init = 10.0
/// beta = 0.001
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub model_path: PathBuf,
    #[serde(default = "default_listen")]
    pub listen_address: String,
    #[serde(default)]
    pub search: SearchConfig,
    pub expected_input: ImageShape,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        Self::from_toml(&text)
    }

    /// Applies `REAAS_LISTEN_ADDRESS` / `REAAS_MODEL_PATH` from `lookup`.
    pub fn with_overrides(mut self, lookup: impl Fn(&str) -> Option<String>) -> Self {
        if let Some(addr) = lookup(ENV_LISTEN_ADDRESS) {
            self.listen_address = addr;
        }
        if let Some(path) = lookup(ENV_MODEL_PATH) {
            self.model_path = path.into();
        }
        self
    }

    pub fn with_env_overrides(self) -> Self {
        self.with_overrides(|k| std::env::var(k).ok())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
        model_path = "enc.bin"
        expected_input = { height = 8, width = 8, channels = 3 }
        [search]
        rho_low_init = 0.0
        rho_high_init = 4.0
        beta = 0.01
    "#;

    #[test]
    fn parses_with_defaults() {
        let c = ServiceConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(c.listen_address, "127.0.0.1:8080");
        assert_eq!(c.expected_input, ImageShape::new(8, 8, 3));
        assert_eq!(c.search.rho_high_init, 4.0);
        let bare = ServiceConfig::from_toml(
            "model_path = \"m\"\nexpected_input = { height = 1, width = 1, channels = 1 }",
        )
        .unwrap();
        assert_eq!(bare.search, SearchConfig::default());
    }

    #[test]
    fn env_overrides_win() {
        let c = ServiceConfig::from_toml(SAMPLE).unwrap().with_overrides(|k| match k {
            ENV_LISTEN_ADDRESS => Some("0.0.0.0:9".into()),
            ENV_MODEL_PATH => Some("/tmp/other.bin".into()),
            _ => None,
        });
        assert_eq!(c.listen_address, "0.0.0.0:9");
        assert_eq!(c.model_path, PathBuf::from("/tmp/other.bin"));
    }

    #[test]
    fn missing_fields_are_errors() {
        assert!(ServiceConfig::from_toml("listen_address = \"x\"").is_err());
    }
}
