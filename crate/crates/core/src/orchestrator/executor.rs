use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Logical time in milliseconds. Only moves when told to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SimClock {
    now_ms: u64,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    pub fn advance(&mut self, ms: u64) {
        self.now_ms += ms;
    }

    /// Moves forward to `t_ms`; never moves backwards.
    pub fn advance_to(&mut self, t_ms: u64) {
        self.now_ms = self.now_ms.max(t_ms);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChildStatus {
    Alive,
    Exited(i32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CmdOutcome {
    pub exit_code: i32,
    pub duration_ms: u64,
}

/// Process-control surface the orchestrator drives. Implementations decide
/// what "a child" is; the simulator never spawns real processes.
pub trait ChildExecutor {
    /// Launches a service and returns its pid.
    fn start_service(&mut self, name: &str, now_ms: u64) -> Result<u32, String>;
    fn poll_service(&mut self, name: &str, pid: u32, now_ms: u64) -> ChildStatus;
    fn stop_service(&mut self, name: &str, pid: u32, now_ms: u64);
    fn execute_cmd(&mut self, name: &str, now_ms: u64) -> CmdOutcome;
}

/// Behaviour of one service launch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Launch {
    Forever,
    /// Exits with status 1 this many milliseconds after starting.
    DieAfterMs(u64),
    FailToStart,
}

/// Per-child scripts. A service walks through its launch list one entry per
/// start; the last entry repeats. Unscripted children run forever and
/// unscripted commands exit 0 instantly.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub services: HashMap<String, Vec<Launch>>,
    #[serde(default)]
    pub commands: HashMap<String, CmdOutcome>,
}

#[derive(Clone, Debug, Default)]
pub struct ScriptedExecutor {
    scenario: Scenario,
    launches: HashMap<String, usize>,
    live: HashMap<u32, (u64, Launch)>,
    next_pid: u32,
}

impl ScriptedExecutor {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            launches: HashMap::new(),
            live: HashMap::new(),
            next_pid: 1000,
        }
    }

    pub fn script_service(&mut self, name: &str, launches: Vec<Launch>) {
        self.scenario.services.insert(name.to_string(), launches);
    }

    pub fn script_command(&mut self, name: &str, outcome: CmdOutcome) {
        self.scenario.commands.insert(name.to_string(), outcome);
    }

    pub fn launch_count(&self, name: &str) -> usize {
        self.launches.get(name).copied().unwrap_or(0)
    }

    fn next_launch(&mut self, name: &str) -> Launch {
        let n = self.launches.entry(name.to_string()).or_default();
        let script = self.scenario.services.get(name);
        let launch = script
            .and_then(|s| s.get(*n).or(s.last()))
            .copied()
            .unwrap_or(Launch::Forever);
        *n += 1;
        launch
    }
}

impl ChildExecutor for ScriptedExecutor {
    fn start_service(&mut self, name: &str, now_ms: u64) -> Result<u32, String> {
        match self.next_launch(name) {
            Launch::FailToStart => Err(format!("{name}: exec failed")),
            launch => {
                self.next_pid += 1;
                self.live.insert(self.next_pid, (now_ms, launch));
                Ok(self.next_pid)
            }
        }
    }

    fn poll_service(&mut self, _name: &str, pid: u32, now_ms: u64) -> ChildStatus {
        match self.live.get(&pid) {
            Some(&(started, Launch::DieAfterMs(life))) if now_ms >= started + life => {
                self.live.remove(&pid);
                ChildStatus::Exited(1)
            }
            Some(_) => ChildStatus::Alive,
            None => ChildStatus::Exited(-1),
        }
    }

    fn stop_service(&mut self, _name: &str, pid: u32, _now_ms: u64) {
        self.live.remove(&pid);
    }

    fn execute_cmd(&mut self, name: &str, _now_ms: u64) -> CmdOutcome {
        self.scenario
            .commands
            .get(name)
            .copied()
            .unwrap_or(CmdOutcome {
                exit_code: 0,
                duration_ms: 0,
            })
    }
}
