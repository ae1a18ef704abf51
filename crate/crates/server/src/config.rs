use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::ServerError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    /// HTTP and WebSocket listen address.
    pub listen: String,
    /// Where bridges connect over TCP.
    pub bridge_listen: String,
    pub log_path: PathBuf,
    pub static_dir: PathBuf,
    pub lease_timeout_s: f64,
    pub pending_timeout_s: f64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            bridge_listen: "127.0.0.1:9090".into(),
            log_path: PathBuf::from("runs/latest/telemetry.ndjson"),
            static_dir: PathBuf::from("webui/static"),
            lease_timeout_s: 30.0,
            pending_timeout_s: 30.0,
        }
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServerError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ServerError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ServerError> {
        for (name, v) in [
            ("lease_timeout_s", self.lease_timeout_s),
            ("pending_timeout_s", self.pending_timeout_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ServerError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyed_text_overrides_defaults() {
        let cfg = ServerConfig::from_toml("listen = \"0.0.0.0:9000\"\nlease_timeout_s = 5\n").unwrap();
        assert_eq!(cfg.listen, "0.0.0.0:9000");
        assert_eq!(cfg.lease_timeout_s, 5.0);
        assert_eq!(cfg.bridge_listen, ServerConfig::default().bridge_listen);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = ServerConfig::from_toml("listen = \"a\"\nlease_timeout_s = \"soon\"\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(ServerConfig::from_toml("lease_timeout_s = 0").is_err());
        assert!(ServerConfig::from_toml("port = 1").is_err());
    }
}
