//! Simulator for the robot's master-service orchestrator: config loading,
//! categorized startup, monitoring with protections, and the RPC surface.

mod config;
mod executor;
mod plan;
mod rpc;
mod sim;

pub use config::{
    load_config, reference_config, Batch, BatchKind, CommandSpec, ConfigError, MasterConfig, Mode,
    Protection, RpcInterface, RuntimeSettings, ServiceSpec, DEFAULT_GLOBAL_PROTECTION_CAP,
    DEFAULT_MONITOR_INTERVAL_MS, DEFAULT_RESTART_MAX_ATTEMPTS, REFERENCE_CONFIG,
};
pub use executor::{
    ChildExecutor, ChildStatus, CmdOutcome, Launch, Scenario, ScriptedExecutor, SimClock,
};
pub use plan::{plan_startup, PlannedBatch, StartupPlan};
pub use rpc::{RpcError, RpcErrorCode, RpcRequest, HANDLERS};
pub use sim::{
    is_legal_transition, CmdState, CommandRun, Event, EventKind, MonitorAction, Orchestrator,
    ServiceRuntime, ServiceState, StartFailure, StartupReport,
};
