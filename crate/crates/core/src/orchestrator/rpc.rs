//! Twelve-handler control surface. Wire format: one JSON request per line,
//! `{"method": "StartService", "params": {"name": "ai_sport"}, "id": 1}`,
//! answered by one JSON line, `{"id": 1, "ok": true, "result": ...}` or
//! `{"id": 1, "ok": false, "error": {"code": "UnknownService", "message": ...}}`.

use std::io::{BufRead, BufReader, Write};
use std::os::unix::net::UnixListener;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::Mode;
use super::executor::ChildExecutor;
use super::sim::{EventKind, Orchestrator};

pub const HANDLERS: [&str; 12] = [
    "GetServiceState",
    "ListServiceState",
    "StartService",
    "StopService",
    "RestartService",
    "ReloadService",
    "RemoveService",
    "GetServiceEnable",
    "GetCmdState",
    "ListCmdState",
    "ExecuteCmd",
    "RemoveCmd",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RpcErrorCode {
    InvalidRequest,
    UnknownHandler,
    UnknownService,
    UnknownCommand,
    ForbiddenService,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct RpcError {
    pub code: RpcErrorCode,
    pub message: String,
}

impl RpcError {
    fn new(code: RpcErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RpcRequest {
    pub method: String,
    #[serde(default)]
    pub params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<Value>,
}

fn name_param(params: &Value) -> Result<&str, RpcError> {
    params
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| RpcError::new(RpcErrorCode::InvalidRequest, "missing string param `name`"))
}

impl<E: ChildExecutor> Orchestrator<E> {
    fn service_doc(&self, idx: usize) -> Value {
        let (spec, rt) = &self.services[idx];
        let now = self.clock.now_ms();
        json!({
            "name": spec.name,
            "mode": spec.mode,
            "enabled": spec.enabled,
            "state": rt.state,
            "pid": rt.pid,
            "restart_count": rt.restart_count,
            "start_time_ms": rt.start_time_ms,
            "uptime_ms": rt.start_time_ms.map(|t| now - t),
        })
    }

    fn command_doc(&self, idx: usize) -> Value {
        let (spec, st) = &self.commands[idx];
        json!({
            "name": spec.name,
            "command": spec.command,
            "mode": spec.mode,
            "executed": st.executed,
            "exit_code": st.exit_code,
            "timed_out": st.timed_out,
            "last_execution_ms": st.last_execution_ms,
        })
    }

    fn require_service(&self, name: &str) -> Result<usize, RpcError> {
        self.service_index(name).ok_or_else(|| {
            RpcError::new(RpcErrorCode::UnknownService, format!("no service `{name}`"))
        })
    }

    fn require_command(&self, name: &str) -> Result<usize, RpcError> {
        self.command_index(name).ok_or_else(|| {
            RpcError::new(RpcErrorCode::UnknownCommand, format!("no command `{name}`"))
        })
    }

    fn refuse_forbidden(&self, mode: Mode, name: &str) -> Result<(), RpcError> {
        if mode == Mode::Forbid {
            return Err(RpcError::new(
                RpcErrorCode::ForbiddenService,
                format!("`{name}` is forbidden"),
            ));
        }
        Ok(())
    }

    /// Explicit start. The only way a MANUAL or disabled service runs.
    fn rpc_start(&mut self, idx: usize) -> Value {
        let name = self.services[idx].0.name.clone();
        if let Err(reason) = self.start_index(idx) {
            self.note(
                &name,
                EventKind::Service,
                format!("start request failed: {reason}"),
            );
        }
        self.service_doc(idx)
    }

    pub fn dispatch(&mut self, method: &str, params: &Value) -> Result<Value, RpcError> {
        match method {
            "GetServiceState" => {
                let idx = self.require_service(name_param(params)?)?;
                Ok(self.service_doc(idx))
            }
            "ListServiceState" => Ok(Value::Array(
                (0..self.services.len())
                    .map(|i| self.service_doc(i))
                    .collect(),
            )),
            "StartService" => {
                let name = name_param(params)?;
                let idx = self.require_service(name)?;
                self.refuse_forbidden(self.services[idx].0.mode, name)?;
                Ok(self.rpc_start(idx))
            }
            "StopService" => {
                let idx = self.require_service(name_param(params)?)?;
                self.stop_index(idx);
                Ok(self.service_doc(idx))
            }
            "RestartService" => {
                let name = name_param(params)?;
                let idx = self.require_service(name)?;
                self.refuse_forbidden(self.services[idx].0.mode, name)?;
                self.stop_index(idx);
                Ok(self.rpc_start(idx))
            }
            "ReloadService" => {
                let name = name_param(params)?;
                let mode = self
                    .pristine_service(name)
                    .ok_or_else(|| {
                        RpcError::new(RpcErrorCode::UnknownService, format!("no service `{name}`"))
                    })?
                    .mode;
                self.refuse_forbidden(mode, name)?;
                if let Some(idx) = self.service_index(name) {
                    self.stop_index(idx);
                }
                let idx = self.reload_spec(name).expect("present in loaded config");
                self.note(name, EventKind::Service, "reloaded".into());
                Ok(self.rpc_start(idx))
            }
            "RemoveService" => {
                let name = name_param(params)?;
                let idx = self.require_service(name)?;
                self.remove_service_index(idx);
                Ok(json!({ "name": name, "removed": true }))
            }
            "GetServiceEnable" => {
                let name = name_param(params)?;
                let idx = self.require_service(name)?;
                Ok(json!({ "name": name, "enabled": self.services[idx].0.enabled }))
            }
            "GetCmdState" => {
                let idx = self.require_command(name_param(params)?)?;
                Ok(self.command_doc(idx))
            }
            "ListCmdState" => Ok(Value::Array(
                (0..self.commands.len())
                    .map(|i| self.command_doc(i))
                    .collect(),
            )),
            "ExecuteCmd" => {
                let name = name_param(params)?;
                let idx = self.require_command(name)?;
                self.refuse_forbidden(self.commands[idx].0.mode, name)?;
                self.run_command_index(idx);
                Ok(self.command_doc(idx))
            }
            "RemoveCmd" => {
                let name = name_param(params)?;
                let idx = self.require_command(name)?;
                self.remove_command_index(idx);
                Ok(json!({ "name": name, "removed": true }))
            }
            other => Err(RpcError::new(
                RpcErrorCode::UnknownHandler,
                format!("no handler `{other}`"),
            )),
        }
    }

    /// Handles one request line and returns the response line (no newline).
    pub fn handle_line(&mut self, line: &str) -> String {
        let (id, result) = match serde_json::from_str::<RpcRequest>(line) {
            Ok(req) => (req.id.clone(), self.dispatch(&req.method, &req.params)),
            Err(e) => (
                None,
                Err(RpcError::new(RpcErrorCode::InvalidRequest, e.to_string())),
            ),
        };
        let mut resp = match result {
            Ok(result) => json!({ "ok": true, "result": result }),
            Err(error) => json!({ "ok": false, "error": error }),
        };
        if let Some(id) = id {
            resp["id"] = id;
        }
        resp.to_string()
    }

    /// Answers every request line from `input` on `output`.
    pub fn serve_stream(
        &mut self,
        input: impl BufRead,
        mut output: impl Write,
    ) -> std::io::Result<()> {
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            writeln!(output, "{}", self.handle_line(&line))?;
            output.flush()?;
        }
        Ok(())
    }

    /// Accepts connections one at a time, so requests are serialized into the
    /// orchestrator. Returns after `max_connections` connections if given.
    pub fn serve(
        &mut self,
        listener: &UnixListener,
        max_connections: Option<usize>,
    ) -> std::io::Result<()> {
        for (served, stream) in listener.incoming().enumerate() {
            let stream = stream?;
            let reader = BufReader::new(stream.try_clone()?);
            self.serve_stream(reader, stream)?;
            if max_connections.is_some_and(|m| served + 1 >= m) {
                break;
            }
        }
        Ok(())
    }
}
