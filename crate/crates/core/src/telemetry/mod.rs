//! Passive model of the robot's `reportState` telemetry: payload schema,
//! report scheduling, capture accounting and egress rules. Nothing here opens
//! a network connection.

mod capture;
mod endpoint;
mod report;
mod rules;
mod schedule;

pub use capture::{
    analyze_capture, read_capture, Allowlist, CaptureRecord, EndpointStats, InterArrival,
    RateReport,
};
pub use endpoint::{EndpointConfig, DEFAULT_REPORT_INTERVAL};
pub use report::{
    parse_report, synthesize_report, Battery, Imu, Motor, ReportState, Resource, ServiceStatus,
    Snapshot, REPORT_CMD, SAMPLE_REPORT,
};
pub use rules::emit_block_rules;
pub use schedule::{reconnect_attempt, simulate_session, Outage, ReportSchedule, SessionEvent};

#[derive(Debug, thiserror::Error)]
pub enum TelemetryError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error("capture line {line}: {message}")]
    Capture { line: usize, message: String },
    #[error("capture contains no records")]
    EmptyCapture,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
