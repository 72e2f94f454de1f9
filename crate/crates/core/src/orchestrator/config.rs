use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::container;
use crate::lcg::DeviceIdentity;
use crate::pipeline::{self, PipelineConfig, PipelineError};

pub const DEFAULT_MONITOR_INTERVAL_MS: u64 = 5_000;
pub const DEFAULT_RESTART_MAX_ATTEMPTS: u32 = 3;
pub const DEFAULT_GLOBAL_PROTECTION_CAP: u32 = 30;

/// Startup category. The serialized names match the config's `type` field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Prio,
    Init,
    Once,
    Forbid,
    Manual,
    Normal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub name: String,
    pub path: String,
    #[serde(rename = "type")]
    pub mode: Mode,
    #[serde(default)]
    pub priority: i64,
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default)]
    pub restart_on_failure: bool,
    #[serde(default = "default_attempts")]
    pub restart_max_attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandSpec {
    pub name: String,
    pub command: String,
    #[serde(rename = "type")]
    pub mode: Mode,
    #[serde(default)]
    pub priority: i64,
    /// Milliseconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protection {
    #[serde(rename = "service")]
    pub guardian: String,
    #[serde(rename = "protect_services")]
    pub protected: Vec<String>,
    /// Seconds.
    pub min_uptime: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchKind {
    Command,
    Service,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    #[serde(rename = "type")]
    pub kind: BatchKind,
    pub items: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeSettings {
    #[serde(default = "default_monitor_interval")]
    pub monitor_interval: u64,
    #[serde(default)]
    pub restart_delay: u64,
}

impl Default for RuntimeSettings {
    fn default() -> Self {
        Self {
            monitor_interval: DEFAULT_MONITOR_INTERVAL_MS,
            restart_delay: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RpcInterface {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default)]
    pub socket_path: String,
    #[serde(default)]
    pub handlers: Vec<String>,
}

/// The orchestrator's configuration document. Fields the simulator does not
/// use (logging, pid file, ...) are ignored on load.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MasterConfig {
    #[serde(default)]
    pub services: Vec<ServiceSpec>,
    #[serde(default)]
    pub commands: Vec<CommandSpec>,
    #[serde(default)]
    pub service_groups: BTreeMap<Mode, Vec<String>>,
    #[serde(default)]
    pub service_protections: Vec<Protection>,
    #[serde(default)]
    pub startup_sequence: Vec<Batch>,
    #[serde(default)]
    pub runtime: RuntimeSettings,
    #[serde(default = "default_cap")]
    pub global_protection_restart_cap: u32,
    #[serde(default)]
    pub rpc_interface: RpcInterface,
}

fn yes() -> bool {
    true
}
fn default_attempts() -> u32 {
    DEFAULT_RESTART_MAX_ATTEMPTS
}
fn default_monitor_interval() -> u64 {
    DEFAULT_MONITOR_INTERVAL_MS
}
fn default_cap() -> u32 {
    DEFAULT_GLOBAL_PROTECTION_CAP
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Decrypt(#[from] PipelineError),
    #[error("config is FMX-wrapped but no key material was supplied")]
    EncryptedWithoutKey,
    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: &'static str, name: String },
    #[error("{context} references unknown name `{name}`")]
    UnknownName { context: String, name: String },
    #[error("`{name}` is listed in group `{group:?}` but its type is `{actual:?}`")]
    GroupMismatch {
        group: Mode,
        name: String,
        actual: Mode,
    },
    #[error("monitor_interval must be positive")]
    ZeroMonitorInterval,
}

impl MasterConfig {
    pub fn service(&self, name: &str) -> Option<&ServiceSpec> {
        self.services.iter().find(|s| s.name == name)
    }

    pub fn command(&self, name: &str) -> Option<&CommandSpec> {
        self.commands.iter().find(|c| c.name == name)
    }

    pub fn monitor_interval_ms(&self) -> u64 {
        self.runtime.monitor_interval
    }

    /// Protections whose protected list names `service`.
    pub fn guardians_of<'a>(&'a self, service: &'a str) -> impl Iterator<Item = &'a Protection> {
        self.service_protections
            .iter()
            .filter(move |p| p.protected.iter().any(|n| n == service))
    }

    /// Name uniqueness, group membership and protection references.
    /// Startup-sequence names are checked by `plan_startup`.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.runtime.monitor_interval == 0 {
            return Err(ConfigError::ZeroMonitorInterval);
        }
        let mut seen = HashSet::new();
        for s in &self.services {
            if !seen.insert(s.name.as_str()) {
                return Err(ConfigError::DuplicateName {
                    kind: "service",
                    name: s.name.clone(),
                });
            }
        }
        let mut seen = HashSet::new();
        for c in &self.commands {
            if !seen.insert(c.name.as_str()) {
                return Err(ConfigError::DuplicateName {
                    kind: "command",
                    name: c.name.clone(),
                });
            }
        }
        for (&group, names) in &self.service_groups {
            for name in names {
                let actual = self
                    .service(name)
                    .map(|s| s.mode)
                    .or_else(|| self.command(name).map(|c| c.mode))
                    .ok_or_else(|| ConfigError::UnknownName {
                        context: format!("service group `{group:?}`"),
                        name: name.clone(),
                    })?;
                if actual != group {
                    return Err(ConfigError::GroupMismatch {
                        group,
                        name: name.clone(),
                        actual,
                    });
                }
            }
        }
        for p in &self.service_protections {
            for name in std::iter::once(&p.guardian).chain(&p.protected) {
                if self.service(name).is_none() {
                    return Err(ConfigError::UnknownName {
                        context: format!("protection on `{}`", p.guardian),
                        name: name.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Parses a configuration, decrypting it first when it carries the FMX magic.
pub fn load_config(
    bytes: &[u8],
    crypto: Option<(&PipelineConfig, &DeviceIdentity)>,
) -> Result<MasterConfig, ConfigError> {
    let plain;
    let json = if container::detect(bytes) {
        let (cfg, id) = crypto.ok_or(ConfigError::EncryptedWithoutKey)?;
        plain = pipeline::load(bytes, id, cfg)?;
        &plain[..]
    } else {
        bytes
    };
    let cfg: MasterConfig = serde_json::from_slice(json)?;
    cfg.validate()?;
    Ok(cfg)
}

/// The reference configuration shipped with the crate.
pub const REFERENCE_CONFIG: &str = include_str!("../../fixtures/master_service.json");

pub fn reference_config() -> MasterConfig {
    load_config(REFERENCE_CONFIG.as_bytes(), None).expect("bundled config is valid")
}
