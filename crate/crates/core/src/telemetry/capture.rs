//! Byte and rate accounting over captured egress records.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::net::IpAddr;

use ipnet::IpNet;
use serde::{Deserialize, Serialize};

use super::TelemetryError;

/// One observed write. Capture files hold one of these per JSON line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureRecord {
    /// Seconds, fractional.
    pub timestamp: f64,
    /// `host:port`, with IPv6 hosts in brackets.
    pub destination: String,
    pub byte_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_hex: Option<String>,
}

impl CaptureRecord {
    pub fn validate(&self) -> Result<(), String> {
        if !self.timestamp.is_finite() {
            return Err("timestamp is not finite".into());
        }
        split_destination(&self.destination)?;
        if let Some(p) = &self.payload_hex {
            let bytes = hex::decode(p).map_err(|e| format!("payload_hex: {e}"))?;
            if (bytes.len() as u64) > self.byte_count {
                return Err(format!(
                    "byte_count {} smaller than payload ({} bytes)",
                    self.byte_count,
                    bytes.len()
                ));
            }
        }
        Ok(())
    }

    pub fn host(&self) -> &str {
        split_destination(&self.destination).map_or("", |(h, _)| h)
    }
}

fn split_destination(dest: &str) -> Result<(&str, u16), String> {
    let (host, port) = dest
        .rsplit_once(':')
        .ok_or_else(|| format!("destination `{dest}` lacks a port"))?;
    let port = port
        .parse()
        .map_err(|_| format!("destination `{dest}` has a bad port"))?;
    let host = host
        .strip_prefix('[')
        .and_then(|h| h.strip_suffix(']'))
        .unwrap_or(host);
    if host.is_empty() {
        return Err(format!("destination `{dest}` has no host"));
    }
    Ok((host, port))
}

/// Reads a JSON-lines capture. Blank lines are ignored.
pub fn read_capture(input: impl BufRead) -> Result<Vec<CaptureRecord>, TelemetryError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| TelemetryError::Capture {
            line: n + 1,
            message,
        };
        let rec: CaptureRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        rec.validate().map_err(bad)?;
        out.push(rec);
    }
    Ok(out)
}

/// Destinations considered legitimate: exact host names (case-insensitive)
/// and address ranges.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Allowlist {
    hosts: BTreeSet<String>,
    nets: Vec<IpNet>,
}

impl Allowlist {
    pub fn new() -> Self {
        Self::default()
    }

    /// Entries are CIDRs, bare addresses, or host names.
    pub fn parse<S: AsRef<str>>(entries: &[S]) -> Self {
        let mut list = Self::new();
        for e in entries {
            list.add(e.as_ref());
        }
        list
    }

    pub fn add(&mut self, entry: &str) {
        let entry = entry.trim();
        if let Ok(net) = entry.parse::<IpNet>() {
            self.nets.push(net);
        } else if let Ok(ip) = entry.parse::<IpAddr>() {
            self.nets.push(IpNet::from(ip));
        } else {
            self.hosts.insert(entry.to_ascii_lowercase());
        }
    }

    pub fn allows(&self, host: &str) -> bool {
        if self.hosts.contains(&host.to_ascii_lowercase()) {
            return true;
        }
        match host.parse::<IpAddr>() {
            Ok(ip) => self.nets.iter().any(|n| n.contains(&ip)),
            Err(_) => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterArrival {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointStats {
    pub destination: String,
    pub records: usize,
    pub total_bytes: u64,
    pub first_seen: f64,
    pub last_seen: f64,
    /// Over the whole capture span, so rates of different endpoints add up.
    pub mean_rate_bps: Option<f64>,
    /// `None` with fewer than two records.
    pub inter_arrival: Option<InterArrival>,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// Seconds from first to last record.
    pub duration_secs: f64,
    pub total_bytes: u64,
    /// `None` when the capture spans zero time.
    pub mean_rate_bps: Option<f64>,
    pub endpoints: Vec<EndpointStats>,
    /// Destinations outside the allowlist, sorted.
    pub flagged: Vec<String>,
    pub suggested_rules: Vec<String>,
}

impl RateReport {
    pub fn endpoint(&self, destination: &str) -> Option<&EndpointStats> {
        self.endpoints.iter().find(|e| e.destination == destination)
    }
}

fn rate(bytes: u64, span: f64) -> Option<f64> {
    (span > 0.0).then(|| bytes as f64 * 8.0 / span)
}

pub fn analyze_capture(
    records: &[CaptureRecord],
    allowlist: &Allowlist,
) -> Result<RateReport, TelemetryError> {
    if records.is_empty() {
        return Err(TelemetryError::EmptyCapture);
    }
    for (n, r) in records.iter().enumerate() {
        r.validate().map_err(|message| TelemetryError::Capture {
            line: n + 1,
            message,
        })?;
    }
    let mut sorted: Vec<&CaptureRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let start = sorted[0].timestamp;
    let span = sorted[sorted.len() - 1].timestamp - start;

    let mut by_dest: BTreeMap<&str, Vec<&CaptureRecord>> = BTreeMap::new();
    for r in &sorted {
        by_dest.entry(r.destination.as_str()).or_default().push(r);
    }

    let mut endpoints = Vec::with_capacity(by_dest.len());
    let mut total_bytes = 0u64;
    for (dest, recs) in by_dest {
        let bytes: u64 = recs.iter().map(|r| r.byte_count).sum();
        total_bytes += bytes;
        let gaps: Vec<f64> = recs
            .windows(2)
            .map(|w| w[1].timestamp - w[0].timestamp)
            .collect();
        let inter_arrival = (!gaps.is_empty()).then(|| InterArrival {
            min: gaps.iter().copied().fold(f64::INFINITY, f64::min),
            max: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: gaps.iter().sum::<f64>() / gaps.len() as f64,
        });
        endpoints.push(EndpointStats {
            destination: dest.to_string(),
            records: recs.len(),
            total_bytes: bytes,
            first_seen: recs[0].timestamp,
            last_seen: recs[recs.len() - 1].timestamp,
            mean_rate_bps: rate(bytes, span),
            inter_arrival,
            flagged: !allowlist.allows(recs[0].host()),
        });
    }

    let flagged: Vec<String> = endpoints
        .iter()
        .filter(|e| e.flagged)
        .map(|e| e.destination.clone())
        .collect();
    let mut report = RateReport {
        duration_secs: span,
        total_bytes,
        mean_rate_bps: rate(total_bytes, span),
        endpoints,
        flagged,
        suggested_rules: Vec::new(),
    };
    report.suggested_rules = super::rules::rule_lines(&report, &[]);
    Ok(report)
}

pub(crate) fn destination_parts(dest: &str) -> Option<(&str, u16)> {
    split_destination(dest).ok()
}
