//! `reportState` payloads. Wire layout:
//!
//! ```text
//! cmd, msgId,
//! state.low.bmsHg     { cellVoltage[], current, soc, temperature[] }
//! state.low.imu       { pitch, roll, yaw }
//! state.low.motorHg[] { position, temperature[2], voltage }
//! state.module.service[] { name, status }
//! state.resource      { cpu[], mem { total, used } }
//! ```
//!
//! Keys outside this layout survive a parse/synthesize round trip in
//! [`Snapshot::extras`], keyed by their dotted path.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::TelemetryError;

pub const REPORT_CMD: &str = "reportState";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    /// Millivolts.
    pub cell_voltages: Vec<i64>,
    /// Milliamps, negative while discharging.
    pub current: i64,
    /// Percent, 0..=100.
    pub soc: u8,
    /// Degrees Celsius.
    pub temperatures: Vec<i64>,
}

impl Battery {
    pub fn new(
        cell_voltages: Vec<i64>,
        current: i64,
        soc: u8,
        temperatures: Vec<i64>,
    ) -> Result<Self, TelemetryError> {
        let b = Self {
            cell_voltages,
            current,
            soc,
            temperatures,
        };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<(), TelemetryError> {
        if self.soc > 100 {
            return Err(TelemetryError::Schema(format!(
                "soc {} above 100",
                self.soc
            )));
        }
        Ok(())
    }
}

/// Degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Imu {
    pub pitch: f64,
    pub roll: f64,
    pub yaw: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Motor {
    /// Radians.
    pub position: f64,
    /// Degrees Celsius.
    pub temperatures: [i64; 2],
    /// Volts.
    pub voltage: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceStatus {
    pub name: String,
    /// Passed through as reported; the meaning of the codes is unknown.
    pub status: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resource {
    pub cpu: Vec<f64>,
    /// Bytes.
    pub mem_total: u64,
    /// Bytes.
    pub mem_used: u64,
}

impl Resource {
    pub fn new(cpu: Vec<f64>, mem_total: u64, mem_used: u64) -> Result<Self, TelemetryError> {
        let r = Self {
            cpu,
            mem_total,
            mem_used,
        };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<(), TelemetryError> {
        if self.mem_used > self.mem_total {
            return Err(TelemetryError::Schema(format!(
                "memory used {} exceeds total {}",
                self.mem_used, self.mem_total
            )));
        }
        Ok(())
    }
}

/// Robot state carried by one report. Absent sections are `None` (or empty
/// for the list-valued ones).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub battery: Option<Battery>,
    pub imu: Option<Imu>,
    pub motors: Vec<Motor>,
    pub services: Vec<ServiceStatus>,
    pub resource: Option<Resource>,
    pub extras: BTreeMap<String, Value>,
}

impl Snapshot {
    pub fn validate(&self) -> Result<(), TelemetryError> {
        if let Some(b) = &self.battery {
            b.validate()?;
        }
        if let Some(r) = &self.resource {
            r.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportState {
    /// Decimal microseconds since the Unix epoch.
    pub msg_id: String,
    pub snapshot: Snapshot,
}

impl ReportState {
    pub fn timestamp_us(&self) -> Option<u64> {
        self.msg_id.parse().ok()
    }
}

fn schema(msg: impl Into<String>) -> TelemetryError {
    TelemetryError::Schema(msg.into())
}

/// Removes `key` from `obj`, requiring an object if present.
fn take_object(
    obj: &mut Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<Option<Map<String, Value>>, TelemetryError> {
    match obj.remove(key) {
        None => Ok(None),
        Some(Value::Object(m)) => Ok(Some(m)),
        Some(_) => Err(schema(format!("{path}{key} is not an object"))),
    }
}

fn take<T: serde::de::DeserializeOwned>(
    obj: &mut Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<T, TelemetryError> {
    let v = obj
        .remove(key)
        .ok_or_else(|| schema(format!("missing {path}{key}")))?;
    serde_json::from_value(v).map_err(|e| schema(format!("{path}{key}: {e}")))
}

fn stash(extras: &mut BTreeMap<String, Value>, path: &str, rest: Map<String, Value>) {
    for (k, v) in rest {
        extras.insert(format!("{path}{k}"), v);
    }
}

pub fn parse_report(doc: &str) -> Result<ReportState, TelemetryError> {
    let value: Value =
        serde_json::from_str(doc).map_err(|e| schema(format!("invalid JSON: {e}")))?;
    let Value::Object(mut top) = value else {
        return Err(schema("report is not an object"));
    };
    let cmd: String = take(&mut top, "cmd", "")?;
    if cmd != REPORT_CMD {
        return Err(schema(format!("cmd is `{cmd}`, expected `{REPORT_CMD}`")));
    }
    let msg_id: String = take(&mut top, "msgId", "")?;
    if msg_id.is_empty() || !msg_id.bytes().all(|b| b.is_ascii_digit()) {
        return Err(schema(format!(
            "msgId `{msg_id}` is not a decimal timestamp"
        )));
    }

    let mut snap = Snapshot::default();
    if let Some(mut state) = take_object(&mut top, "state", "")? {
        if let Some(mut low) = take_object(&mut state, "low", "state.")? {
            if let Some(mut bms) = take_object(&mut low, "bmsHg", "state.low.")? {
                let p = "state.low.bmsHg.";
                let soc: i64 = take(&mut bms, "soc", p)?;
                let battery = Battery {
                    cell_voltages: take(&mut bms, "cellVoltage", p)?,
                    current: take(&mut bms, "current", p)?,
                    soc: u8::try_from(soc)
                        .map_err(|_| schema(format!("soc {soc} out of range")))?,
                    temperatures: take(&mut bms, "temperature", p)?,
                };
                battery.validate()?;
                snap.battery = Some(battery);
                stash(&mut snap.extras, p, bms);
            }
            if let Some(mut imu) = take_object(&mut low, "imu", "state.low.")? {
                let p = "state.low.imu.";
                snap.imu = Some(Imu {
                    pitch: take(&mut imu, "pitch", p)?,
                    roll: take(&mut imu, "roll", p)?,
                    yaw: take(&mut imu, "yaw", p)?,
                });
                stash(&mut snap.extras, p, imu);
            }
            if let Some(motors) = low.remove("motorHg") {
                let Value::Array(motors) = motors else {
                    return Err(schema("state.low.motorHg is not a list"));
                };
                for (i, m) in motors.into_iter().enumerate() {
                    let Value::Object(mut m) = m else {
                        return Err(schema(format!("state.low.motorHg[{i}] is not an object")));
                    };
                    let p = format!("state.low.motorHg[{i}].");
                    snap.motors.push(Motor {
                        position: take(&mut m, "position", &p)?,
                        temperatures: take(&mut m, "temperature", &p)?,
                        voltage: take(&mut m, "voltage", &p)?,
                    });
                    stash(&mut snap.extras, &p, m);
                }
            }
            stash(&mut snap.extras, "state.low.", low);
        }
        if let Some(mut module) = take_object(&mut state, "module", "state.")? {
            if module.contains_key("service") {
                snap.services = take(&mut module, "service", "state.module.")?;
            }
            stash(&mut snap.extras, "state.module.", module);
        }
        if let Some(mut res) = take_object(&mut state, "resource", "state.")? {
            let p = "state.resource.";
            let cpu = take(&mut res, "cpu", p)?;
            let mut mem = take_object(&mut res, "mem", p)?
                .ok_or_else(|| schema("missing state.resource.mem"))?;
            let resource = Resource {
                cpu,
                mem_total: take(&mut mem, "total", "state.resource.mem.")?,
                mem_used: take(&mut mem, "used", "state.resource.mem.")?,
            };
            resource.validate()?;
            snap.resource = Some(resource);
            stash(&mut snap.extras, "state.resource.mem.", mem);
            stash(&mut snap.extras, p, res);
        }
        stash(&mut snap.extras, "state.", state);
    }
    stash(&mut snap.extras, "", top);
    Ok(ReportState {
        msg_id,
        snapshot: snap,
    })
}

/// Inserts `value` at a dotted path. `[i]` segments address list elements
/// that already exist.
fn place(root: &mut Map<String, Value>, path: &str, value: Value) {
    let mut segments: Vec<&str> = path.split('.').collect();
    let last = segments.pop().expect("split yields one segment");
    let mut cur = root;
    for seg in segments {
        let (key, index) = match seg.split_once('[') {
            Some((k, rest)) => (k, rest.trim_end_matches(']').parse::<usize>().ok()),
            None => (seg, None),
        };
        let entry = cur.entry(key).or_insert_with(|| json!({}));
        let target = match index {
            Some(i) => entry.get_mut(i),
            None => Some(entry),
        };
        match target.and_then(Value::as_object_mut) {
            Some(obj) => cur = obj,
            None => return,
        }
    }
    cur.insert(last.to_string(), value);
}

/// Renders a report with `msgId` set to `clock_us`.
pub fn synthesize_report(snapshot: &Snapshot, clock_us: u64) -> Result<String, TelemetryError> {
    snapshot.validate()?;
    let mut low = Map::new();
    if let Some(b) = &snapshot.battery {
        low.insert(
            "bmsHg".into(),
            json!({
                "cellVoltage": b.cell_voltages,
                "current": b.current,
                "soc": b.soc,
                "temperature": b.temperatures,
            }),
        );
    }
    if let Some(imu) = &snapshot.imu {
        low.insert(
            "imu".into(),
            json!({ "pitch": imu.pitch, "roll": imu.roll, "yaw": imu.yaw }),
        );
    }
    let motors: Vec<Value> = snapshot
        .motors
        .iter()
        .map(|m| json!({ "position": m.position, "temperature": m.temperatures, "voltage": m.voltage }))
        .collect();
    low.insert("motorHg".into(), Value::Array(motors));

    let mut state = Map::new();
    state.insert("low".into(), Value::Object(low));
    state.insert("module".into(), json!({ "service": snapshot.services }));
    if let Some(r) = &snapshot.resource {
        state.insert(
            "resource".into(),
            json!({ "cpu": r.cpu, "mem": { "total": r.mem_total, "used": r.mem_used } }),
        );
    }

    let mut top = Map::new();
    top.insert("cmd".into(), json!(REPORT_CMD));
    top.insert("msgId".into(), json!(clock_us.to_string()));
    top.insert("state".into(), Value::Object(state));
    for (path, value) in &snapshot.extras {
        place(&mut top, path, value.clone());
    }
    Ok(Value::Object(top).to_string())
}

/// The bundled sample payload.
pub const SAMPLE_REPORT: &str = include_str!("../../fixtures/report_state_sample.json");
