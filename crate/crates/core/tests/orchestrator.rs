use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::os::unix::net::{UnixListener, UnixStream};

use fmx_core::cipher::CipherKey;
use fmx_core::lcg::{DeviceIdentity, SeedDerivationProfile};
use fmx_core::orchestrator::*;
use fmx_core::pipeline::{self, PipelineConfig};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

fn orchestrator(cfg: MasterConfig, exec: ScriptedExecutor) -> Orchestrator<ScriptedExecutor> {
    Orchestrator::new(cfg, exec).unwrap()
}

fn started(cfg: MasterConfig, exec: ScriptedExecutor) -> Orchestrator<ScriptedExecutor> {
    let plan = plan_startup(&cfg).unwrap();
    let mut o = orchestrator(cfg, exec);
    o.run_startup(&plan);
    o
}

#[test]
fn reference_config_shape() {
    let cfg = reference_config();
    assert_eq!(cfg.services.len(), 22);
    assert_eq!(cfg.commands.len(), 12);
    assert_eq!(cfg.monitor_interval_ms(), 5_000);
    assert_eq!(cfg.global_protection_restart_cap, 30);
    assert_eq!(cfg.service("iox-roudi").unwrap().restart_max_attempts, 3);
    assert_eq!(cfg.service_protections[0].min_uptime, 10);
    assert_eq!(cfg.rpc_interface.handlers, HANDLERS);
}

#[test]
fn plan_reproduces_sequence() {
    let cfg = reference_config();
    let plan = plan_startup(&cfg).unwrap();
    assert!(plan.warnings.is_empty());
    assert_eq!(plan.batches.len(), cfg.startup_sequence.len());
    for (planned, configured) in plan.batches.iter().zip(&cfg.startup_sequence) {
        assert_eq!(planned.kind, configured.kind);
        assert_eq!(planned.items, configured.items);
    }
    assert_eq!(plan.batches[0].kind, BatchKind::Command);
    assert_eq!(plan.batches[0].items, ["net-init", "ota-box", "ota-update"]);
}

#[test]
fn plan_filters_forbidden_and_manual() {
    let mut cfg = reference_config();
    cfg.services
        .iter_mut()
        .find(|s| s.name == "ros_bridge")
        .unwrap()
        .mode = Mode::Forbid;
    cfg.startup_sequence.push(Batch {
        kind: BatchKind::Service,
        items: vec!["g1_arm_example".into()],
    });
    let plan = plan_startup(&cfg).unwrap();
    assert_eq!(plan.warnings.len(), 2);
    assert!(plan
        .batches
        .iter()
        .all(|b| !b.items.contains(&"ros_bridge".to_string())));
    assert_eq!(plan.batches[8].items, ["motion_switcher"]);
    // The manual-only batch vanishes entirely.
    assert_eq!(plan.batches.len(), cfg.startup_sequence.len() - 1);
}

#[test]
fn plan_errors_and_empty() {
    let mut cfg = reference_config();
    cfg.startup_sequence[3].items.push("no_such_service".into());
    assert!(matches!(
        plan_startup(&cfg),
        Err(ConfigError::UnknownName { name, .. }) if name == "no_such_service"
    ));
    cfg.startup_sequence.clear();
    assert!(plan_startup(&cfg).unwrap().is_empty());
}

#[test]
fn load_plain_wrapped_and_broken() {
    let plain = REFERENCE_CONFIG.as_bytes();
    let cfg = load_config(plain, None).unwrap();

    let pc = PipelineConfig::new(
        CipherKey::new(*b"0123456789abcdef").unwrap(),
        SeedDerivationProfile::ReferenceMd5,
    );
    let id = DeviceIdentity::sample();
    let wrapped = pipeline::wrap(plain, &id, &pc).unwrap();
    assert_eq!(load_config(&wrapped, Some((&pc, &id))).unwrap(), cfg);
    assert!(matches!(
        load_config(&wrapped, None),
        Err(ConfigError::EncryptedWithoutKey)
    ));

    assert!(matches!(
        load_config(&plain[..plain.len() / 2], None),
        Err(ConfigError::Parse(_))
    ));

    let mut dup = cfg.clone();
    dup.services.push(dup.services[0].clone());
    assert!(matches!(
        dup.validate(),
        Err(ConfigError::DuplicateName { .. })
    ));
    let mut mismatch = cfg;
    mismatch
        .service_groups
        .get_mut(&Mode::Prio)
        .unwrap()
        .push("ai_sport".into());
    assert!(matches!(
        mismatch.validate(),
        Err(ConfigError::GroupMismatch { .. })
    ));
}

#[test]
fn startup_order_and_terminal_state() {
    let cfg = reference_config();
    let plan = plan_startup(&cfg).unwrap();
    let mut o = orchestrator(cfg.clone(), ScriptedExecutor::default());
    let report = o.run_startup(&plan);
    assert!(report.failures.is_empty());
    assert_eq!(report.commands.len(), 11);

    let pos = |name: &str, to: ServiceState| {
        o.events()
            .iter()
            .position(|e| e.subject == name && e.to == Some(to))
            .unwrap()
    };
    assert!(pos("iox-roudi", ServiceState::Running) < pos("basic_service", ServiceState::Starting));
    assert!(
        pos("upper_bluetooth", ServiceState::Running) < pos("iox-roudi", ServiceState::Starting)
    );

    for batch in &plan.batches {
        if batch.kind == BatchKind::Service {
            for name in &batch.items {
                assert_eq!(o.state_of(name), Some(ServiceState::Running), "{name}");
            }
        }
    }
    for s in cfg.services.iter().filter(|s| s.mode == Mode::Manual) {
        assert_eq!(o.state_of(&s.name), Some(ServiceState::Stopped));
    }
    assert!(o.run_for(60_000).is_empty());
}

#[test]
fn failing_command_does_not_stop_startup() {
    let mut exec = ScriptedExecutor::default();
    exec.script_command(
        "pw-init",
        CmdOutcome {
            exit_code: 3,
            duration_ms: 200,
        },
    );
    exec.script_command(
        "net-init",
        CmdOutcome {
            exit_code: 0,
            duration_ms: 40_000,
        },
    );
    let cfg = reference_config();
    let plan = plan_startup(&cfg).unwrap();
    let mut o = orchestrator(cfg, exec);
    let report = o.run_startup(&plan);
    assert_eq!(report.failures.len(), 2);
    assert_eq!(report.failures[0].reason, "timed out");
    assert_eq!(report.failures[1].reason, "exit 3");
    // net-init is cut off at its 30 s timeout.
    assert_eq!(report.finished_at_ms, 30_200);
    assert!(o.command_state("net-init").unwrap().timed_out);
    assert_eq!(o.state_of("ota_box"), Some(ServiceState::Running));
}

#[test]
fn restart_cap_leaves_service_failed() {
    let mut exec = ScriptedExecutor::default();
    exec.script_service("iox-roudi", vec![Launch::DieAfterMs(1_000)]);
    let mut o = started(reference_config(), exec);
    let actions = o.run_for(60_000);
    let restarts = actions
        .iter()
        .filter(|a| matches!(a, MonitorAction::Restarted { name, .. } if name == "iox-roudi"))
        .count();
    let deaths = actions
        .iter()
        .filter(|a| matches!(a, MonitorAction::Died { name, .. } if name == "iox-roudi"))
        .count();
    assert_eq!(restarts, 3);
    assert_eq!(deaths, 4);
    assert!(actions.iter().any(
        |a| matches!(a, MonitorAction::GaveUp { name, reason } if name == "iox-roudi" && reason.contains("limit"))
    ));
    let (_, rt) = o.service("iox-roudi").unwrap();
    assert_eq!(rt.state, ServiceState::Failed);
    assert_eq!(rt.restart_count, 3);
    assert_eq!(o.executor().launch_count("iox-roudi"), 4);
}

#[test]
fn protection_defers_restart_until_guardian_uptime() {
    let mut exec = ScriptedExecutor::default();
    exec.script_command(
        "am-init",
        CmdOutcome {
            exit_code: 0,
            duration_ms: 4_000,
        },
    );
    exec.script_service("ai_sport", vec![Launch::DieAfterMs(5_000), Launch::Forever]);
    let cfg = reference_config();
    let plan = plan_startup(&cfg).unwrap();
    let mut o = orchestrator(cfg, exec);
    let report = o.run_startup(&plan);
    assert_eq!(report.finished_at_ms, 4_000);
    assert_eq!(o.service("basic_service").unwrap().1.start_time_ms, Some(0));

    // First tick at 9 s: ai_sport died 9 s after basic_service started.
    let first = o.run_until(9_000);
    assert_eq!(
        first,
        vec![
            MonitorAction::Died {
                name: "ai_sport".into(),
                exit_code: 1
            },
            MonitorAction::Deferred {
                name: "ai_sport".into(),
                guardian: "basic_service".into()
            },
        ]
    );
    assert_eq!(o.state_of("ai_sport"), Some(ServiceState::Failed));

    let second = o.run_until(14_000);
    assert_eq!(
        second,
        vec![MonitorAction::Restarted {
            name: "ai_sport".into(),
            attempt: 1
        }]
    );
    assert_eq!(o.state_of("ai_sport"), Some(ServiceState::Running));
    assert_eq!(o.protection_restarts(), 1);
}

#[test]
fn global_protection_cap_suppresses_31st_restart() {
    let mut cfg = reference_config();
    let ai = cfg
        .services
        .iter_mut()
        .find(|s| s.name == "ai_sport")
        .unwrap();
    ai.restart_max_attempts = 1_000;
    let mut exec = ScriptedExecutor::default();
    exec.script_service("ai_sport", vec![Launch::DieAfterMs(1)]);
    let mut o = started(cfg, exec);
    let actions = o.run_for(10 * 60_000);
    let restarts = actions
        .iter()
        .filter(|a| matches!(a, MonitorAction::Restarted { .. }))
        .count();
    assert_eq!(restarts, 30);
    assert_eq!(o.protection_restarts(), 30);
    let suppressed: Vec<_> = actions
        .iter()
        .filter(|a| matches!(a, MonitorAction::Suppressed { .. }))
        .collect();
    assert_eq!(
        suppressed,
        vec![&MonitorAction::Suppressed {
            name: "ai_sport".into()
        }]
    );
    assert_eq!(o.state_of("ai_sport"), Some(ServiceState::Failed));
    assert_eq!(o.service("ai_sport").unwrap().1.restart_count, 30);
}

#[test]
fn unprotected_restart_does_not_touch_global_cap() {
    let mut exec = ScriptedExecutor::default();
    exec.script_service("chat_go", vec![Launch::DieAfterMs(1), Launch::Forever]);
    let mut cfg = reference_config();
    cfg.services
        .iter_mut()
        .find(|s| s.name == "chat_go")
        .unwrap()
        .restart_on_failure = true;
    let mut o = started(cfg, exec);
    o.run_for(20_000);
    assert_eq!(o.state_of("chat_go"), Some(ServiceState::Running));
    assert_eq!(o.protection_restarts(), 0);
}

#[test]
fn services_without_restart_policy_stay_failed() {
    let mut exec = ScriptedExecutor::default();
    exec.script_service("video_hub", vec![Launch::DieAfterMs(100)]);
    let mut o = started(reference_config(), exec);
    let actions = o.run_for(30_000);
    assert!(actions.contains(&MonitorAction::GaveUp {
        name: "video_hub".into(),
        reason: "no restart policy".into()
    }));
    assert_eq!(o.state_of("video_hub"), Some(ServiceState::Failed));
}

fn call(o: &mut Orchestrator<ScriptedExecutor>, method: &str, name: Option<&str>) -> Value {
    let req = match name {
        Some(n) => json!({ "method": method, "params": { "name": n } }),
        None => json!({ "method": method }),
    };
    serde_json::from_str(&o.handle_line(&req.to_string())).unwrap()
}

fn error_code(resp: &Value) -> &str {
    assert_eq!(resp["ok"], false, "{resp}");
    resp["error"]["code"].as_str().unwrap()
}

#[test]
fn rpc_surface() {
    let mut o = started(reference_config(), ScriptedExecutor::default());

    let list = call(&mut o, "ListServiceState", None);
    assert_eq!(list["result"].as_array().unwrap().len(), 22);
    assert_eq!(
        call(&mut o, "ListCmdState", None)["result"]
            .as_array()
            .unwrap()
            .len(),
        12
    );

    let r = call(&mut o, "GetServiceState", Some("g1_arm_example"));
    assert_eq!(r["result"]["state"], "STOPPED");
    let r = call(&mut o, "StartService", Some("g1_arm_example"));
    assert_eq!(r["result"]["state"], "RUNNING");
    let r = call(&mut o, "GetServiceEnable", Some("g1_arm_example"));
    assert_eq!(r["result"]["enabled"], false);

    let r = call(&mut o, "StopService", Some("ai_sport"));
    assert_eq!(r["result"]["state"], "STOPPED");
    // A stopped service is not resurrected by the monitor.
    o.run_for(20_000);
    assert_eq!(o.state_of("ai_sport"), Some(ServiceState::Stopped));
    let r = call(&mut o, "RestartService", Some("ai_sport"));
    assert_eq!(r["result"]["state"], "RUNNING");

    let before = o.service("ai_sport").unwrap().1.pid;
    call(&mut o, "RestartService", Some("ai_sport"));
    assert_ne!(o.service("ai_sport").unwrap().1.pid, before);

    assert_eq!(
        error_code(&call(&mut o, "StartService", Some("nope"))),
        "UnknownService"
    );
    assert_eq!(
        error_code(&call(&mut o, "SaveService", Some("ai_sport"))),
        "UnknownHandler"
    );
    assert_eq!(
        error_code(&call(&mut o, "GetCmdState", Some("nope"))),
        "UnknownCommand"
    );
    assert_eq!(
        error_code(&call(&mut o, "StartService", None)),
        "InvalidRequest"
    );
    let bad: Value = serde_json::from_str(&o.handle_line("{not json")).unwrap();
    assert_eq!(error_code(&bad), "InvalidRequest");

    let r = call(&mut o, "RemoveService", Some("chat_go"));
    assert_eq!(r["result"]["removed"], true);
    assert_eq!(
        error_code(&call(&mut o, "GetServiceState", Some("chat_go"))),
        "UnknownService"
    );
    assert_eq!(
        call(&mut o, "ListServiceState", None)["result"]
            .as_array()
            .unwrap()
            .len(),
        21
    );
    let r = call(&mut o, "ReloadService", Some("chat_go"));
    assert_eq!(r["result"]["state"], "RUNNING");
    assert_eq!(r["result"]["restart_count"], 0);

    let r = call(&mut o, "ExecuteCmd", Some("sim-apn-verifier"));
    assert_eq!(r["result"]["executed"], true);
    assert_eq!(r["result"]["exit_code"], 0);
    call(&mut o, "RemoveCmd", Some("sim-apn-verifier"));
    assert_eq!(
        error_code(&call(&mut o, "ExecuteCmd", Some("sim-apn-verifier"))),
        "UnknownCommand"
    );

    let with_id: Value = serde_json::from_str(
        &o.handle_line(r#"{"method":"GetServiceState","params":{"name":"iox-roudi"},"id":7}"#),
    )
    .unwrap();
    assert_eq!(with_id["id"], 7);
    assert_eq!(with_id["result"]["state"], "RUNNING");
}

#[test]
fn rpc_refuses_forbidden() {
    let mut cfg = reference_config();
    cfg.services
        .iter_mut()
        .find(|s| s.name == "bashrunner")
        .unwrap()
        .mode = Mode::Forbid;
    let mut o = started(cfg, ScriptedExecutor::default());
    assert_eq!(o.state_of("bashrunner"), Some(ServiceState::Stopped));
    for method in ["StartService", "RestartService", "ReloadService"] {
        assert_eq!(
            error_code(&call(&mut o, method, Some("bashrunner"))),
            "ForbiddenService"
        );
    }
    assert_eq!(o.state_of("bashrunner"), Some(ServiceState::Stopped));
}

#[test]
fn rpc_over_unix_socket() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("master_service.sock");
    let listener = UnixListener::bind(&path).unwrap();
    let client = std::thread::spawn({
        let path = path.clone();
        move || {
            let mut stream = UnixStream::connect(&path).unwrap();
            writeln!(stream, r#"{{"method":"ListServiceState","id":1}}"#).unwrap();
            writeln!(
                stream,
                r#"{{"method":"StartService","params":{{"name":"auto_test_low"}},"id":2}}"#
            )
            .unwrap();
            writeln!(stream, r#"{{"method":"Bogus","id":3}}"#).unwrap();
            stream.shutdown(std::net::Shutdown::Write).unwrap();
            BufReader::new(stream)
                .lines()
                .map(|l| serde_json::from_str::<Value>(&l.unwrap()).unwrap())
                .collect::<Vec<_>>()
        }
    });
    let mut o = started(reference_config(), ScriptedExecutor::default());
    o.serve(&listener, Some(1)).unwrap();
    let responses = client.join().unwrap();
    assert_eq!(responses.len(), 3);
    assert_eq!(responses[0]["result"].as_array().unwrap().len(), 22);
    assert_eq!(responses[1]["result"]["state"], "RUNNING");
    assert_eq!(responses[2]["error"]["code"], "UnknownHandler");
    assert_eq!(o.state_of("auto_test_low"), Some(ServiceState::Running));
}

#[test]
fn identical_inputs_give_identical_event_logs() {
    let run = || {
        let mut exec = ScriptedExecutor::default();
        exec.script_service(
            "robot_state",
            vec![Launch::DieAfterMs(7_000), Launch::FailToStart],
        );
        exec.script_service(
            "iox-roudi",
            vec![Launch::DieAfterMs(12_000), Launch::Forever],
        );
        let mut o = started(reference_config(), exec);
        o.run_for(120_000);
        let mut log = Vec::new();
        o.write_event_log(&mut log).unwrap();
        log
    };
    let a = run();
    assert!(!a.is_empty());
    assert_eq!(a, run());
    let first: Value = serde_json::from_slice(a.split(|&b| b == b'\n').next().unwrap()).unwrap();
    assert_eq!(first["subject"], "net-init");
    assert_eq!(first["kind"], "command");
}

/// Drives random child behaviour and RPC traffic until 10^4 child failures
/// (deaths and failed launches) have happened, then replays the event log
/// against the lifecycle graph.
#[test]
fn lifecycle_fuzz() {
    const CHILD_EVENTS: usize = 10_000;
    let mut rng = StdRng::seed_from_u64(0x5EED);
    let mut cfg = reference_config();
    cfg.services
        .iter_mut()
        .find(|s| s.name == "vui_service")
        .unwrap()
        .mode = Mode::Forbid;
    for s in cfg.services.iter_mut() {
        s.restart_on_failure = rng.gen_bool(0.5);
    }
    let names: Vec<String> = cfg.services.iter().map(|s| s.name.clone()).collect();

    let mut exec = ScriptedExecutor::default();
    for name in &names {
        let script = (0..rng.gen_range(1..6))
            .map(|_| match rng.gen_range(0..10) {
                0 => Launch::FailToStart,
                1 => Launch::Forever,
                _ => Launch::DieAfterMs(rng.gen_range(0..30_000)),
            })
            .collect();
        exec.script_service(name, script);
    }
    let mut o = started(cfg.clone(), exec);

    let methods = [
        "StartService",
        "StopService",
        "RestartService",
        "ReloadService",
        "RemoveService",
    ];
    let mut monitor_restarts: HashMap<String, u32> = HashMap::new();
    let (mut failures, mut scanned, mut steps) = (0, 0, 0);
    while failures < CHILD_EVENTS {
        failures += o.events()[scanned..]
            .iter()
            .filter(|e| e.to == Some(ServiceState::Failed))
            .count();
        scanned = o.events().len();
        steps += 1;
        assert!(steps < 1_000_000, "fuzz stalled");
        if rng.gen_bool(0.7) {
            for a in o.run_for(rng.gen_range(0..8_000)) {
                if let MonitorAction::Restarted { name, .. }
                | MonitorAction::RestartFailed { name, .. } = a
                {
                    *monitor_restarts.entry(name).or_default() += 1;
                }
            }
        } else {
            let name = &names[rng.gen_range(0..names.len())];
            let method = methods[rng.gen_range(0..methods.len())];
            if method == "ReloadService" {
                monitor_restarts.remove(name);
            }
            o.dispatch(method, &json!({ "name": name })).ok();
        }
        assert_eq!(
            o.state_of("vui_service").unwrap_or(ServiceState::Stopped),
            ServiceState::Stopped
        );
        assert!(o.protection_restarts() <= cfg.global_protection_restart_cap);
    }

    let mut last: HashMap<&str, ServiceState> = HashMap::new();
    let mut transitions = 0;
    for e in o.events().iter().filter(|e| e.kind == EventKind::Service) {
        let (Some(from), Some(to)) = (e.from, e.to) else {
            if e.note.as_deref() == Some("removed") {
                last.remove(e.subject.as_str());
            }
            continue;
        };
        let prev = last
            .get(e.subject.as_str())
            .copied()
            .unwrap_or(ServiceState::Stopped);
        assert_eq!(prev, from, "broken chain for {} at {}", e.subject, e.t_ms);
        assert!(is_legal_transition(from, to), "{from:?} -> {to:?}");
        last.insert(&e.subject, to);
        transitions += 1;
    }
    assert!(transitions > CHILD_EVENTS, "only {transitions} transitions");
    for s in &cfg.services {
        if let Some((spec, rt)) = o.service(&s.name) {
            assert!(rt.restart_count <= spec.restart_max_attempts);
        }
    }
    for (name, n) in monitor_restarts {
        let max = cfg.service(&name).unwrap().restart_max_attempts;
        assert!(n <= max, "{name}: {n} monitor restarts since last reload");
    }
}
