use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use url::Url;

use super::TelemetryError;

pub const DEFAULT_REPORT_INTERVAL: u64 = 300;

/// MQTT client settings as shipped on the robot. Intervals are seconds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase", try_from = "RawEndpointConfig")]
pub struct EndpointConfig {
    pub server_uri_map: BTreeMap<String, String>,
    pub auto_reconnect: bool,
    pub auth_type: i64,
    pub reconnect_interval: u64,
    pub report_interval: u64,
}

#[derive(Deserialize)]
#[serde(rename_all = "PascalCase")]
struct RawEndpointConfig {
    server_uri_map: BTreeMap<String, String>,
    #[serde(default)]
    auto_reconnect: bool,
    #[serde(default)]
    auth_type: i64,
    reconnect_interval: u64,
    #[serde(default = "default_report_interval")]
    report_interval: u64,
}

fn default_report_interval() -> u64 {
    DEFAULT_REPORT_INTERVAL
}

impl TryFrom<RawEndpointConfig> for EndpointConfig {
    type Error = TelemetryError;

    fn try_from(raw: RawEndpointConfig) -> Result<Self, Self::Error> {
        EndpointConfig::new(
            raw.server_uri_map,
            raw.auto_reconnect,
            raw.auth_type,
            raw.reconnect_interval,
            raw.report_interval,
        )
    }
}

impl EndpointConfig {
    pub fn new(
        server_uri_map: BTreeMap<String, String>,
        auto_reconnect: bool,
        auth_type: i64,
        reconnect_interval: u64,
        report_interval: u64,
    ) -> Result<Self, TelemetryError> {
        if report_interval == 0 {
            return Err(TelemetryError::Config(
                "ReportInterval must be positive".into(),
            ));
        }
        if auto_reconnect && reconnect_interval == 0 {
            return Err(TelemetryError::Config(
                "ReconnectInterval must be positive when AutoReconnect is set".into(),
            ));
        }
        for (region, uri) in &server_uri_map {
            check_uri(uri).map_err(|m| TelemetryError::Config(format!("{region}: {m}")))?;
        }
        Ok(Self {
            server_uri_map,
            auto_reconnect,
            auth_type,
            reconnect_interval,
            report_interval,
        })
    }

    pub fn from_json(doc: &str) -> Result<Self, TelemetryError> {
        serde_json::from_str(doc).map_err(|e| TelemetryError::Config(e.to_string()))
    }

    /// `(host, port)` of every configured server, deduplicated.
    pub fn endpoints(&self) -> Vec<(String, u16)> {
        let mut out: Vec<(String, u16)> = self
            .server_uri_map
            .values()
            .filter_map(|u| {
                let u = Url::parse(u).ok()?;
                Some((u.host_str()?.to_string(), u.port()?))
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

fn check_uri(uri: &str) -> Result<(), String> {
    let u = Url::parse(uri).map_err(|e| format!("`{uri}`: {e}"))?;
    if u.host_str().is_none_or(str::is_empty) {
        return Err(format!("`{uri}` has no host"));
    }
    // Url::port() hides the scheme default, which is what we want: the port
    // must be spelled out.
    if u.port().is_none() {
        return Err(format!("`{uri}` has no explicit port"));
    }
    Ok(())
}
