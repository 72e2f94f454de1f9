use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{BatchKind, CommandSpec, ConfigError, MasterConfig, Mode, ServiceSpec};
use super::executor::{ChildExecutor, ChildStatus, SimClock};
use super::plan::StartupPlan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ServiceState {
    Stopped,
    Starting,
    Running,
    Stopping,
    Failed,
}

/// The lifecycle graph. `Failed -> Starting` is a restart and
/// `Failed -> Stopped` an explicit stop of a dead service.
pub fn is_legal_transition(from: ServiceState, to: ServiceState) -> bool {
    use ServiceState::*;
    matches!(
        (from, to),
        (Stopped, Starting)
            | (Starting, Running)
            | (Starting, Failed)
            | (Running, Stopping)
            | (Running, Failed)
            | (Stopping, Stopped)
            | (Failed, Starting)
            | (Failed, Stopped)
    )
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceRuntime {
    pub state: ServiceState,
    pub pid: Option<u32>,
    /// Restarts issued by the monitor since load or the last reload.
    pub restart_count: u32,
    pub start_time_ms: Option<u64>,
    #[serde(skip)]
    pending_restart: bool,
}

impl Default for ServiceRuntime {
    fn default() -> Self {
        Self {
            state: ServiceState::Stopped,
            pid: None,
            restart_count: 0,
            start_time_ms: None,
            pending_restart: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CmdState {
    pub exit_code: Option<i32>,
    pub executed: bool,
    pub last_execution_ms: Option<u64>,
    pub timed_out: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Service,
    Command,
    Monitor,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub t_ms: u64,
    pub subject: String,
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub from: Option<ServiceState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub to: Option<ServiceState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum MonitorAction {
    Died { name: String, exit_code: i32 },
    Restarted { name: String, attempt: u32 },
    RestartFailed { name: String, attempt: u32 },
    Deferred { name: String, guardian: String },
    GaveUp { name: String, reason: String },
    Suppressed { name: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandRun {
    pub name: String,
    pub exit_code: Option<i32>,
    pub timed_out: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartFailure {
    pub name: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartupReport {
    pub commands: Vec<CommandRun>,
    pub started: Vec<String>,
    pub failures: Vec<StartFailure>,
    pub finished_at_ms: u64,
}

/// Single-threaded orchestrator over simulated children and a logical clock.
pub struct Orchestrator<E> {
    pristine: MasterConfig,
    pub(super) services: Vec<(ServiceSpec, ServiceRuntime)>,
    pub(super) commands: Vec<(CommandSpec, CmdState)>,
    pub(super) executor: E,
    pub(super) clock: SimClock,
    events: Vec<Event>,
    protection_restarts: u32,
    next_tick_ms: Option<u64>,
}

impl<E: ChildExecutor> Orchestrator<E> {
    pub fn new(cfg: MasterConfig, executor: E) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self {
            services: cfg
                .services
                .iter()
                .map(|s| (s.clone(), ServiceRuntime::default()))
                .collect(),
            commands: cfg
                .commands
                .iter()
                .map(|c| (c.clone(), CmdState::default()))
                .collect(),
            pristine: cfg,
            executor,
            clock: SimClock::new(),
            events: Vec::new(),
            protection_restarts: 0,
            next_tick_ms: None,
        })
    }

    pub fn config(&self) -> &MasterConfig {
        &self.pristine
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    pub fn executor(&self) -> &E {
        &self.executor
    }

    pub fn executor_mut(&mut self) -> &mut E {
        &mut self.executor
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn protection_restarts(&self) -> u32 {
        self.protection_restarts
    }

    pub fn service_names(&self) -> impl Iterator<Item = &str> {
        self.services.iter().map(|(s, _)| s.name.as_str())
    }

    pub fn service(&self, name: &str) -> Option<(&ServiceSpec, &ServiceRuntime)> {
        self.services
            .iter()
            .find(|(s, _)| s.name == name)
            .map(|(s, r)| (s, r))
    }

    pub fn state_of(&self, name: &str) -> Option<ServiceState> {
        self.service(name).map(|(_, r)| r.state)
    }

    pub fn command_state(&self, name: &str) -> Option<&CmdState> {
        self.commands
            .iter()
            .find(|(c, _)| c.name == name)
            .map(|(_, st)| st)
    }

    pub fn write_event_log(&self, mut out: impl Write) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub(super) fn service_index(&self, name: &str) -> Option<usize> {
        self.services.iter().position(|(s, _)| s.name == name)
    }

    pub(super) fn command_index(&self, name: &str) -> Option<usize> {
        self.commands.iter().position(|(c, _)| c.name == name)
    }

    pub(super) fn pristine_service(&self, name: &str) -> Option<&ServiceSpec> {
        self.pristine.service(name)
    }

    pub(super) fn note(&mut self, subject: &str, kind: EventKind, note: String) {
        self.events.push(Event {
            t_ms: self.clock.now_ms(),
            subject: subject.to_string(),
            kind,
            from: None,
            to: None,
            note: Some(note),
        });
    }

    fn transition(&mut self, idx: usize, to: ServiceState, note: Option<String>) {
        let (spec, rt) = &mut self.services[idx];
        let from = rt.state;
        debug_assert!(
            is_legal_transition(from, to),
            "{} {from:?} -> {to:?}",
            spec.name
        );
        rt.state = to;
        self.events.push(Event {
            t_ms: self.clock.now_ms(),
            subject: spec.name.clone(),
            kind: EventKind::Service,
            from: Some(from),
            to: Some(to),
            note,
        });
    }

    /// Launches a STOPPED or FAILED service. FORBID services never start.
    pub(super) fn start_index(&mut self, idx: usize) -> Result<(), String> {
        let (spec, rt) = &self.services[idx];
        if spec.mode == Mode::Forbid {
            return Err(format!("`{}` is forbidden", spec.name));
        }
        match rt.state {
            ServiceState::Stopped | ServiceState::Failed => {}
            ServiceState::Running => return Ok(()),
            other => return Err(format!("`{}` is {other:?}", spec.name)),
        }
        let name = spec.name.clone();
        self.transition(idx, ServiceState::Starting, None);
        let now = self.clock.now_ms();
        match self.executor.start_service(&name, now) {
            Ok(pid) => {
                let rt = &mut self.services[idx].1;
                rt.pid = Some(pid);
                rt.start_time_ms = Some(now);
                self.transition(idx, ServiceState::Running, Some(format!("pid {pid}")));
                Ok(())
            }
            Err(reason) => {
                let rt = &mut self.services[idx].1;
                rt.pid = None;
                rt.start_time_ms = None;
                self.transition(idx, ServiceState::Failed, Some(reason.clone()));
                Err(reason)
            }
        }
    }

    pub(super) fn stop_index(&mut self, idx: usize) {
        let name = self.services[idx].0.name.clone();
        self.services[idx].1.pending_restart = false;
        match self.services[idx].1.state {
            ServiceState::Running => {
                self.transition(idx, ServiceState::Stopping, None);
                if let Some(pid) = self.services[idx].1.pid.take() {
                    let now = self.clock.now_ms();
                    self.executor.stop_service(&name, pid, now);
                }
                self.services[idx].1.start_time_ms = None;
                self.transition(idx, ServiceState::Stopped, None);
            }
            ServiceState::Failed => self.transition(idx, ServiceState::Stopped, None),
            _ => {}
        }
    }

    pub(super) fn run_command_index(&mut self, idx: usize) -> CommandRun {
        let name = self.commands[idx].0.name.clone();
        let timeout = self.commands[idx].0.timeout;
        let started = self.clock.now_ms();
        let outcome = self.executor.execute_cmd(&name, started);
        let timed_out = timeout.is_some_and(|t| outcome.duration_ms > t);
        self.clock
            .advance(timeout.map_or(outcome.duration_ms, |t| outcome.duration_ms.min(t)));
        let exit_code = (!timed_out).then_some(outcome.exit_code);
        self.commands[idx].1 = CmdState {
            exit_code,
            executed: true,
            last_execution_ms: Some(started),
            timed_out,
        };
        let note = match exit_code {
            Some(code) => format!("exit {code}"),
            None => "timed out".to_string(),
        };
        self.note(&name, EventKind::Command, note);
        CommandRun {
            name,
            exit_code,
            timed_out,
        }
    }

    /// Runs the plan batch by batch. Commands finish before the next item;
    /// failures are recorded and startup carries on. Monitoring starts one
    /// interval after the last item.
    pub fn run_startup(&mut self, plan: &StartupPlan) -> StartupReport {
        let mut report = StartupReport::default();
        let items = plan
            .batches
            .iter()
            .flat_map(|b| b.items.iter().map(move |n| (b.kind, n)));
        for (kind, name) in items {
            match kind {
                BatchKind::Command => match self.command_index(name) {
                    Some(idx) => {
                        let run = self.run_command_index(idx);
                        if run.exit_code != Some(0) {
                            report.failures.push(StartFailure {
                                name: name.clone(),
                                reason: match run.exit_code {
                                    Some(c) => format!("exit {c}"),
                                    None => "timed out".into(),
                                },
                            });
                        }
                        report.commands.push(run);
                    }
                    None => report.failures.push(StartFailure {
                        name: name.clone(),
                        reason: "unknown command".into(),
                    }),
                },
                BatchKind::Service => match self.service_index(name) {
                    Some(idx) => match self.start_index(idx) {
                        Ok(()) => report.started.push(name.clone()),
                        Err(reason) => report.failures.push(StartFailure {
                            name: name.clone(),
                            reason,
                        }),
                    },
                    None => report.failures.push(StartFailure {
                        name: name.clone(),
                        reason: "unknown service".into(),
                    }),
                },
            }
        }
        report.finished_at_ms = self.clock.now_ms();
        self.next_tick_ms = Some(self.clock.now_ms() + self.pristine.monitor_interval_ms());
        report
    }

    /// One monitor pass at the current clock reading: detect deaths, then
    /// decide restarts in config order.
    pub fn monitor_tick(&mut self) -> Vec<MonitorAction> {
        let mut actions = Vec::new();
        let now = self.clock.now_ms();

        for idx in 0..self.services.len() {
            let (spec, rt) = &self.services[idx];
            if rt.state != ServiceState::Running {
                continue;
            }
            let Some(pid) = rt.pid else { continue };
            let name = spec.name.clone();
            if let ChildStatus::Exited(code) = self.executor.poll_service(&name, pid, now) {
                let rt = &mut self.services[idx].1;
                rt.pid = None;
                rt.start_time_ms = None;
                rt.pending_restart = true;
                self.transition(
                    idx,
                    ServiceState::Failed,
                    Some(format!("exited with {code}")),
                );
                actions.push(MonitorAction::Died {
                    name,
                    exit_code: code,
                });
            }
        }

        for idx in 0..self.services.len() {
            if !self.services[idx].1.pending_restart {
                continue;
            }
            if let Some(action) = self.consider_restart(idx, now) {
                match &action {
                    MonitorAction::Deferred { name, guardian } => {
                        let note = format!("restart deferred: waiting on `{guardian}`");
                        self.note(name, EventKind::Monitor, note);
                    }
                    MonitorAction::GaveUp { name, reason } => {
                        self.note(name, EventKind::Monitor, format!("not restarted: {reason}"));
                    }
                    MonitorAction::Suppressed { name } => {
                        let note = "restart suppressed: global protection cap reached".into();
                        self.note(name, EventKind::Monitor, note);
                    }
                    _ => {}
                }
                actions.push(action);
            }
        }
        actions
    }

    fn consider_restart(&mut self, idx: usize, now: u64) -> Option<MonitorAction> {
        let (spec, rt) = &self.services[idx];
        let name = spec.name.clone();
        let policy = spec.enabled && spec.restart_on_failure;
        let (count, max) = (rt.restart_count, spec.restart_max_attempts);
        if !policy {
            self.services[idx].1.pending_restart = false;
            return Some(MonitorAction::GaveUp {
                name,
                reason: "no restart policy".into(),
            });
        }
        if count >= max {
            self.services[idx].1.pending_restart = false;
            return Some(MonitorAction::GaveUp {
                name,
                reason: format!("restart limit {max} reached"),
            });
        }

        let guardians: Vec<(String, u64)> = self
            .pristine
            .guardians_of(&name)
            .map(|p| (p.guardian.clone(), p.min_uptime))
            .collect();
        let protected = !guardians.is_empty();
        for (guardian, min_uptime) in guardians {
            let ready = self.service(&guardian).is_some_and(|(_, g)| {
                g.state == ServiceState::Running
                    && g.start_time_ms
                        .is_some_and(|t| now.saturating_sub(t) >= min_uptime * 1000)
            });
            if !ready {
                return Some(MonitorAction::Deferred { name, guardian });
            }
        }
        if protected && self.protection_restarts >= self.pristine.global_protection_restart_cap {
            self.services[idx].1.pending_restart = false;
            return Some(MonitorAction::Suppressed { name });
        }

        let rt = &mut self.services[idx].1;
        rt.restart_count += 1;
        let attempt = rt.restart_count;
        if protected {
            self.protection_restarts += 1;
        }
        match self.start_index(idx) {
            Ok(()) => {
                self.services[idx].1.pending_restart = false;
                Some(MonitorAction::Restarted { name, attempt })
            }
            // Still FAILED and still pending: the next tick tries again.
            Err(_) => Some(MonitorAction::RestartFailed { name, attempt }),
        }
    }

    /// Advances the clock to `t_ms`, running a monitor pass at every interval
    /// boundary on the way.
    pub fn run_until(&mut self, t_ms: u64) -> Vec<MonitorAction> {
        let interval = self.pristine.monitor_interval_ms();
        let mut next = self.next_tick_ms.unwrap_or(self.clock.now_ms() + interval);
        let mut actions = Vec::new();
        while next <= t_ms {
            self.clock.advance_to(next);
            actions.extend(self.monitor_tick());
            next += interval;
        }
        self.next_tick_ms = Some(next);
        self.clock.advance_to(t_ms);
        actions
    }

    pub fn run_for(&mut self, duration_ms: u64) -> Vec<MonitorAction> {
        self.run_until(self.clock.now_ms() + duration_ms)
    }

    /// Re-registers a service from the loaded config, resetting its counters.
    pub(super) fn reload_spec(&mut self, name: &str) -> Option<usize> {
        let spec = self.pristine_service(name)?.clone();
        Some(match self.service_index(name) {
            Some(idx) => {
                self.services[idx].0 = spec;
                self.services[idx].1.restart_count = 0;
                idx
            }
            None => {
                self.services.push((spec, ServiceRuntime::default()));
                self.services.len() - 1
            }
        })
    }

    pub(super) fn remove_service_index(&mut self, idx: usize) {
        self.stop_index(idx);
        let name = self.services.remove(idx).0.name;
        self.note(&name, EventKind::Service, "removed".into());
    }

    pub(super) fn remove_command_index(&mut self, idx: usize) {
        let name = self.commands.remove(idx).0.name;
        self.note(&name, EventKind::Command, "removed".into());
    }
}
