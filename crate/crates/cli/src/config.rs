//! `carl.toml`: file locations and per-component settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use carl_bridge::WanLinkConfig;
use carl_server::ServerConfig;

use crate::error::CliError;

pub const DEFAULT_CONFIG: &str = "carl.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotPaths {
    pub description: PathBuf,
    pub controller: PathBuf,
    pub scene: PathBuf,
    pub behaviors: PathBuf,
}

impl Default for RobotPaths {
    fn default() -> Self {
        Self {
            description: "robots/demo_humanoid.json".into(),
            controller: "config/controller.json".into(),
            scene: "config/scene.json".into(),
            behaviors: "behaviors".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeSection {
    /// Server address the bridge dials in split deployments.
    pub server_addr: String,
    /// Telemetry cap, Hz.
    pub telemetry_rate: f64,
}

impl Default for BridgeSection {
    fn default() -> Self {
        Self {
            server_addr: "127.0.0.1:9090".into(),
            telemetry_rate: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RealtimeSection {
    /// SCHED_FIFO priority for the servo thread; unset runs it unprivileged.
    pub servo_priority: Option<i32>,
    pub plant_priority: Option<i32>,
}

impl Default for RealtimeSection {
    fn default() -> Self {
        Self {
            servo_priority: Some(80),
            plant_priority: Some(79),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Where run artifacts are written.
    pub out_dir: PathBuf,
    pub scenarios: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            out_dir: "runs/latest".into(),
            scenarios: "scenarios".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarlConfig {
    pub robot: RobotPaths,
    pub server: ServerConfig,
    pub bridge: BridgeSection,
    pub wan: WanLinkConfig,
    pub realtime: RealtimeSection,
    pub run: RunSection,
}

impl CarlConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::config(origin, e))?;
        cfg.server.validate().map_err(|e| CliError::config(origin, e))?;
        cfg.wan.validate().map_err(|e| CliError::config(origin, e))?;
        carl_bridge::ThrottlePolicy::new(cfg.bridge.telemetry_rate).map_err(|e| CliError::config(origin, e))?;
        Ok(cfg)
    }

    /// Load `path`, or `carl.toml` in the working directory when it exists,
    /// or the built-in defaults. Relative paths inside the file are resolved
    /// against the file's directory.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let (text, origin) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::config(p, e))?;
                (text, p.to_path_buf())
            }
            None if Path::new(DEFAULT_CONFIG).exists() => {
                let p = PathBuf::from(DEFAULT_CONFIG);
                (std::fs::read_to_string(&p).map_err(|e| CliError::config(&p, e))?, p)
            }
            None => return Ok(Self::default()),
        };
        let mut cfg = Self::parse(&text, &origin)?;
        let base = origin.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.rebase(&base);
        Ok(cfg)
    }

    /// Make every relative path relative to `base` instead.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.robot.description);
        fix(&mut self.robot.controller);
        fix(&mut self.robot.scene);
        fix(&mut self.robot.behaviors);
        fix(&mut self.server.log_path);
        fix(&mut self.server.static_dir);
        fix(&mut self.run.out_dir);
        fix(&mut self.run.scenarios);
    }
}
