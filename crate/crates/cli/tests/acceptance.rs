//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Oracle data in `tests/data` was produced
//! by an independent implementation and is frozen.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use fmx_core::cipher::{CipherKey, PaddingMode, SubkeySchedule};
use fmx_core::container::{self, FmxHeader, HeaderProfile, HEADER_LEN, MAGIC};
use fmx_core::keysearch::families::{self, SuffixKeys};
use fmx_core::keysearch::{
    run_attack, try_key, AttackPlan, CandidateFamily, FamilyParams, Outcome, PlaintextDetector,
    Verdict,
};
use fmx_core::lcg::{self, DeviceIdentity, SeedDerivationProfile, TransformProfile};
use fmx_core::orchestrator::*;
use fmx_core::pipeline::{self, PipelineConfig};
use fmx_core::sha256;
use fmx_core::telemetry::{
    analyze_capture, parse_report, synthesize_report, Allowlist, Battery, CaptureRecord,
    EndpointConfig, Imu, Motor, ReportSchedule, Resource, ServiceStatus, Snapshot, SAMPLE_REPORT,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::json;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn data(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn unhex(s: &str) -> Vec<u8> {
    hex::decode(s).expect("oracle data is hex")
}

/// SHA-256 counter-mode byte stream, shared with the oracle generator.
fn stream(label: &str, n: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(n + 32);
    let mut counter = 0u32;
    while out.len() < n {
        let mut block = label.as_bytes().to_vec();
        block.extend_from_slice(&counter.to_le_bytes());
        out.extend_from_slice(&sha256(&block));
        counter += 1;
    }
    out.truncate(n);
    out
}

fn blowfish_vectors() -> Check {
    let start = Instant::now();
    let mut n = 0;
    for line in data("blowfish_vectors.txt").lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        let sched = SubkeySchedule::new(&CipherKey::new(unhex(f[0])).map_err(|e| e.to_string())?);
        let (pt, ct) = (unhex(f[1]), unhex(f[2]));
        let enc = sched.encrypt_block(&pt).map_err(|e| e.to_string())?;
        check!(enc[..] == ct[..], "encrypt mismatch for key {}", f[0]);
        let dec = sched.decrypt_block(&ct).map_err(|e| e.to_string())?;
        check!(dec[..] == pt[..], "decrypt mismatch for key {}", f[0]);
        n += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    check!(n >= 32, "only {n} vectors");
    check!(secs < 1.0, "took {secs:.3}s");
    Ok(format!("{n} vectors byte-exact in {secs:.4}s"))
}

fn random_config(rng: &mut StdRng) -> PipelineConfig {
    let key: Vec<u8> = (0..rng.gen_range(4..=56)).map(|_| rng.gen()).collect();
    let seed = if rng.gen_bool(0.5) {
        SeedDerivationProfile::ReferenceMd5
    } else {
        SeedDerivationProfile::ExplicitSeed(rng.gen())
    };
    let header_profile = if rng.gen_bool(0.5) {
        HeaderProfile::MainText
    } else {
        HeaderProfile::AppendixChecksum
    };
    PipelineConfig {
        header_profile,
        padding: [PaddingMode::ZeroPad, PaddingMode::Pkcs7, PaddingMode::NoPad]
            [rng.gen_range(0..3)],
        transform: if rng.gen_bool(0.5) {
            TransformProfile::IdentityZero
        } else {
            TransformProfile::IndexByte
        },
        checksum_enabled: header_profile == HeaderProfile::AppendixChecksum && rng.gen_bool(0.5),
        ..PipelineConfig::new(CipherKey::new(key).expect("4..=56 bytes"), seed)
    }
}

fn random_identity(rng: &mut StdRng) -> DeviceIdentity {
    let word = |rng: &mut StdRng, lo: usize| -> String {
        (0..rng.gen_range(lo..20))
            .map(|_| families::SUFFIX_CHARSET[rng.gen_range(0..62)] as char)
            .collect()
    };
    DeviceIdentity::new(
        word(rng, 1),
        word(rng, 0),
        word(rng, 0),
        word(rng, 0),
        rng.gen(),
    )
    .expect("non-empty device code")
}

fn pipeline_round_trip() -> Check {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(0xF111E);
    let mut bytes = 0usize;
    for case in 0..1000 {
        let cfg = random_config(&mut rng);
        let id = random_identity(&mut rng);
        let mut len = rng.gen_range(0..=64 * 1024);
        if cfg.padding == PaddingMode::NoPad {
            len -= len % 8;
        }
        let mut plain = vec![0u8; len];
        rng.fill(&mut plain[..]);
        let file =
            pipeline::wrap(&plain, &id, &cfg).map_err(|e| format!("case {case}: wrap: {e}"))?;
        let back =
            pipeline::load(&file, &id, &cfg).map_err(|e| format!("case {case}: load: {e}"))?;
        check!(back == plain, "case {case}: round trip differs ({cfg:?})");
        bytes += len;
    }
    let secs = start.elapsed().as_secs_f64();
    check!(secs < 10.0, "took {secs:.2}s");
    Ok(format!(
        "1000/1000 cases, {} KiB total, {secs:.2}s",
        bytes / 1024
    ))
}

fn dec2_compatibility() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out_dir = dir.path().join("out");
    let mut sink = Vec::new();
    let mut n = 0;
    for line in data("dec2_fixtures.txt").lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        let (i, len): (usize, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        let key = CipherKey::from_hex(f[2]).map_err(|e| e.to_string())?;
        let mut file = MAGIC.to_vec();
        file.extend(stream(&format!("dec2-hdr-{i}"), 28));
        file.extend(stream(&format!("dec2-body-{i}"), len));
        let input = dir.path().join(format!("fixture_{i:02}.fmx"));
        std::fs::write(&input, &file).map_err(|e| e.to_string())?;

        let code = fmx_workbench::cmd_fmx_dec2(&[input], &out_dir, &key, &mut sink)
            .map_err(|e| format!("fixture {i}: {e}"))?;
        check!(code == 0, "fixture {i}: exit {code}");
        let got = std::fs::read(out_dir.join(format!("fixture_{i:02}.fmx.dec2")))
            .map_err(|e| e.to_string())?;
        check!(
            hex::encode(sha256(&got)) == f[3],
            "fixture {i}: output differs from oracle"
        );

        // Same composition spelled out: strip 32, zero-fill to 8, decrypt blocks.
        let mut body = file[HEADER_LEN..].to_vec();
        body.resize(body.len().div_ceil(8) * 8, 0);
        let sched = SubkeySchedule::new(&key);
        let composed: Vec<u8> = body
            .chunks(8)
            .flat_map(|b| sched.decrypt_block(b).expect("8-byte block"))
            .collect();
        check!(
            got == composed,
            "fixture {i}: output differs from composed oracle"
        );
        n += 1;
    }
    check!(n == 20, "expected 20 fixtures, found {n}");

    let junk = dir.path().join("plain.json");
    std::fs::write(&junk, b"{}").map_err(|e| e.to_string())?;
    let mut err = Vec::new();
    let key = CipherKey::new([7u8; 16]).expect("16 bytes");
    let code = fmx_workbench::cmd_fmx_dec2(&[junk], &out_dir, &key, &mut err)
        .map_err(|e| e.to_string())?;
    let err = String::from_utf8_lossy(&err);
    check!(
        code == 1 && err.contains("(no FMX magic)"),
        "non-FMX input: exit {code}, stderr {err}"
    );
    Ok(format!(
        "{n} fixtures byte-identical, non-FMX input skipped"
    ))
}

fn lcg_fidelity() -> Check {
    let mut n = 0;
    for line in data("lcg_streams.txt").lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        let seed = u32::from_str_radix(f[1], 16).map_err(|e| e.to_string())?;
        let got = match f[0] {
            "shift24" => lcg::keystream(seed, 64),
            "shift16" => lcg::gen_obfuscation(seed, 64),
            other => return Err(format!("unknown variant {other}")),
        };
        check!(got == unhex(f[2]), "{} seed {seed:#x} differs", f[0]);
        n += 1;
    }
    check!(n == 6, "expected 6 streams, found {n}");
    Ok("seeds 0, 1, 0xDEADBEEF x {>>24, >>16}: 64 bytes each exact".into())
}

const CONFIG: &[u8] = br#"{"services": [{"name": "ai_sport", "enabled": true}], "version": 1}"#;

/// Seed 0 keeps the first Layer-1 byte, so the Layer-2 detector sees `{`.
fn fixture(key: &[u8]) -> Vec<u8> {
    let cfg = PipelineConfig::new(
        CipherKey::new(key.to_vec()).expect("16 bytes"),
        SeedDerivationProfile::ExplicitSeed(0),
    );
    pipeline::wrap(CONFIG, &DeviceIdentity::sample(), &cfg).expect("wrap")
}

fn family_keys(family: CandidateFamily) -> Vec<[u8; 16]> {
    let id = DeviceIdentity::sample();
    match family {
        CandidateFamily::SuffixBruteForce => SuffixKeys::new(&id, 1, 2).unwrap().collect(),
        f => f
            .candidates(&id, &FamilyParams::default())
            .unwrap()
            .collect(),
    }
}

fn attack_recovery() -> Check {
    let id = DeviceIdentity::sample();
    let det = PlaintextDetector::default();
    for family in CandidateFamily::ALL {
        let keys = family_keys(family);
        let planted = keys.len() * 2 / 3;
        let file = fixture(&keys[planted]);
        let mut plan = AttackPlan::single(family, None, 4);
        plan.params.suffix_max_len = 2;
        let report = run_attack(&file, &id, &plan, &det).map_err(|e| e.to_string())?;
        let Outcome::Found {
            key,
            family: f,
            candidate_index,
            ..
        } = &report.outcome
        else {
            return Err(format!("{family}: not recovered"));
        };
        check!(*f == family, "{family}: reported {f}");
        let k = unhex(key);
        check!(
            *candidate_index as usize <= planted,
            "{family}: index past the planted key"
        );
        check!(
            try_key(&file, &k, &det) == Verdict::Confirm,
            "{family}: winner does not confirm"
        );
    }

    let mut pattern = AttackPlan::progressive(1);
    pattern.phases.truncate(1);
    let unplanted = fixture(b"not-in-any-famly");
    let report = run_attack(&unplanted, &id, &pattern, &PlaintextDetector::never())
        .map_err(|e| e.to_string())?;
    check!(
        report.outcome == Outcome::Exhausted { total_tested: 545 },
        "pattern phase: {:?}",
        report.outcome
    );
    let secs = report.phases[0].elapsed_secs;
    check!(secs < 0.1, "pattern phase took {secs:.4}s");

    for key in [
        family_keys(CandidateFamily::HardwareCombos)[250],
        family_keys(CandidateFamily::SuffixBruteForce)[3000],
    ] {
        let file = fixture(&key);
        let outcomes: Vec<_> = [1, 4, 8]
            .iter()
            .map(|&w| run_attack(&file, &id, &AttackPlan::progressive(w), &det).map(|r| r.outcome))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        check!(
            outcomes.windows(2).all(|w| w[0] == w[1]),
            "outcomes differ across workers: {outcomes:?}"
        );
        check!(
            matches!(outcomes[0], Outcome::Found { .. }),
            "determinism fixture not found"
        );
    }
    Ok(format!(
        "6/6 families found; 545-key pattern phase in {secs:.4}s; outcomes equal for 1/4/8 workers"
    ))
}

fn suffix_scale() -> Check {
    let id = DeviceIdentity::sample();
    let file = fixture(b"not-in-any-famly");
    let mut plan = AttackPlan::single(CandidateFamily::SuffixBruteForce, None, 8);
    plan.params.suffix_max_len = 1;
    let report =
        run_attack(&file, &id, &plan, &PlaintextDetector::default()).map_err(|e| e.to_string())?;
    check!(
        report.outcome == Outcome::Exhausted { total_tested: 124 },
        "max_len 1: {:?}",
        report.outcome
    );

    const SAMPLE: u64 = 1_000_000;
    let mut plan = AttackPlan::single(CandidateFamily::SuffixBruteForce, Some(SAMPLE), 8);
    plan.params.suffix_min_len = 4;
    plan.params.suffix_max_len = 4;
    let report =
        run_attack(&file, &id, &plan, &PlaintextDetector::never()).map_err(|e| e.to_string())?;
    check!(
        report.total_tested == SAMPLE,
        "tested {}",
        report.total_tested
    );
    let rate = report.keys_per_sec();
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    check!(
        rate >= 100_000.0,
        "124-key space exhausts correctly, but throughput is {rate:.0} keys/s on 8 workers \
         ({cpus} CPU(s) available), below the 100,000 keys/s floor"
    );
    Ok(format!(
        "124-key space exhausted; {rate:.0} keys/s on 8 workers ({cpus} CPU(s))"
    ))
}

fn started(
    cfg: MasterConfig,
    exec: ScriptedExecutor,
) -> Result<Orchestrator<ScriptedExecutor>, String> {
    let plan = plan_startup(&cfg).map_err(|e| e.to_string())?;
    let mut o = Orchestrator::new(cfg, exec).map_err(|e| e.to_string())?;
    o.run_startup(&plan);
    Ok(o)
}

fn count(actions: &[MonitorAction], pred: impl Fn(&MonitorAction) -> bool) -> usize {
    actions.iter().filter(|a| pred(a)).count()
}

fn orchestrator_conformance() -> Check {
    let cfg = reference_config();
    check!(cfg.services.len() == 22, "{} services", cfg.services.len());
    let plan = plan_startup(&cfg).map_err(|e| e.to_string())?;
    let planned: Vec<_> = plan
        .batches
        .iter()
        .map(|b| (b.kind, b.items.clone()))
        .collect();
    let configured: Vec<_> = cfg
        .startup_sequence
        .iter()
        .map(|b| (b.kind, b.items.clone()))
        .collect();
    check!(planned == configured, "plan differs from startup_sequence");

    // Restart cap: 3 restarts, then FAILED.
    let mut exec = ScriptedExecutor::default();
    exec.script_service("iox-roudi", vec![Launch::DieAfterMs(1_000)]);
    let mut o = started(reference_config(), exec)?;
    let actions = o.run_for(60_000);
    let restarts = count(
        &actions,
        |a| matches!(a, MonitorAction::Restarted { name, .. } if name == "iox-roudi"),
    );
    check!(restarts == 3, "iox-roudi restarted {restarts} times");
    check!(
        o.state_of("iox-roudi") == Some(ServiceState::Failed),
        "iox-roudi not FAILED"
    );

    // Protection deferral: guardian has 9 s of uptime, needs 10.
    let mut exec = ScriptedExecutor::default();
    exec.script_command(
        "am-init",
        CmdOutcome {
            exit_code: 0,
            duration_ms: 4_000,
        },
    );
    exec.script_service("ai_sport", vec![Launch::DieAfterMs(5_000), Launch::Forever]);
    let mut o = started(reference_config(), exec)?;
    let first = o.run_until(9_000);
    check!(
        first.contains(&MonitorAction::Deferred {
            name: "ai_sport".into(),
            guardian: "basic_service".into()
        }),
        "no deferral at 9 s: {first:?}"
    );
    let second = o.run_until(14_000);
    check!(
        second
            == [MonitorAction::Restarted {
                name: "ai_sport".into(),
                attempt: 1
            }],
        "no restart at 14 s: {second:?}"
    );

    // Global cap: the 31st protection restart is suppressed.
    let mut cfg = reference_config();
    cfg.services
        .iter_mut()
        .find(|s| s.name == "ai_sport")
        .unwrap()
        .restart_max_attempts = 1_000;
    let mut exec = ScriptedExecutor::default();
    exec.script_service("ai_sport", vec![Launch::DieAfterMs(1)]);
    let mut o = started(cfg, exec)?;
    let actions = o.run_for(600_000);
    let restarts = count(&actions, |a| matches!(a, MonitorAction::Restarted { .. }));
    let suppressed = count(&actions, |a| matches!(a, MonitorAction::Suppressed { .. }));
    check!(
        restarts == 30 && suppressed == 1,
        "{restarts} restarts, {suppressed} suppressions"
    );

    let transitions = lifecycle_fuzz(10_000)?;
    Ok(format!(
        "22 services; plan matches; cap 3, deferral at min_uptime 10, global cap 30 shown; \
         {transitions} fuzzed transitions, 0 illegal"
    ))
}

/// Drives random child deaths and RPC calls until `child_events` FAILED
/// transitions have happened, then audits every recorded transition.
fn lifecycle_fuzz(child_events: usize) -> Result<usize, String> {
    let mut rng = StdRng::seed_from_u64(0xACCE);
    let mut cfg = reference_config();
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
    let mut o = started(cfg.clone(), exec)?;
    let methods = [
        "StartService",
        "StopService",
        "RestartService",
        "ReloadService",
        "RemoveService",
    ];
    let (mut failures, mut scanned, mut steps) = (0, 0, 0);
    while failures < child_events {
        failures += o.events()[scanned..]
            .iter()
            .filter(|e| e.to == Some(ServiceState::Failed))
            .count();
        scanned = o.events().len();
        steps += 1;
        check!(steps < 1_000_000, "fuzz stalled at {failures} events");
        if rng.gen_bool(0.7) {
            o.run_for(rng.gen_range(0..8_000));
        } else {
            let name = &names[rng.gen_range(0..names.len())];
            o.dispatch(
                methods[rng.gen_range(0..methods.len())],
                &json!({ "name": name }),
            )
            .ok();
        }
        check!(
            o.protection_restarts() <= cfg.global_protection_restart_cap,
            "global cap exceeded"
        );
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
        check!(
            prev == from,
            "broken chain for {} at {} ms",
            e.subject,
            e.t_ms
        );
        check!(is_legal_transition(from, to), "illegal {from:?} -> {to:?}");
        last.insert(&e.subject, to);
        transitions += 1;
    }
    Ok(transitions)
}

fn evenly(dest: &str, total: u64, n: u64, span: f64) -> Vec<CaptureRecord> {
    (0..n)
        .map(|i| CaptureRecord {
            timestamp: span * i as f64 / (n - 1) as f64,
            destination: dest.to_string(),
            byte_count: total / n + u64::from(i < total % n),
            payload_hex: None,
        })
        .collect()
}

fn random_snapshot(rng: &mut StdRng) -> Snapshot {
    let f = |rng: &mut StdRng| rng.gen_range(-1e4..1e4f64);
    Snapshot {
        battery: rng.gen_bool(0.8).then(|| {
            Battery::new(
                (0..rng.gen_range(0..20))
                    .map(|_| rng.gen_range(2500..4500))
                    .collect(),
                rng.gen(),
                rng.gen_range(0..=100),
                (0..rng.gen_range(0..6))
                    .map(|_| rng.gen_range(-40..90))
                    .collect(),
            )
            .unwrap()
        }),
        imu: rng.gen_bool(0.8).then(|| Imu {
            pitch: f(rng),
            roll: f(rng),
            yaw: f(rng),
        }),
        motors: (0..rng.gen_range(0..30))
            .map(|_| Motor {
                position: f(rng),
                temperatures: [rng.gen_range(-40..150), rng.gen_range(-40..150)],
                voltage: f(rng),
            })
            .collect(),
        services: (0..rng.gen_range(0..8))
            .map(|i| ServiceStatus {
                name: format!("svc_{i}"),
                status: rng.gen(),
            })
            .collect(),
        resource: rng.gen_bool(0.8).then(|| {
            let total = rng.gen::<u64>() >> 1;
            Resource::new(
                (0..rng.gen_range(0..8)).map(|_| rng.gen()).collect(),
                total,
                rng.gen_range(0..=total),
            )
            .unwrap()
        }),
        extras: Default::default(),
    }
}

fn telemetry_arithmetic() -> Check {
    let mut recs = evenly("43.175.228.18:17883", 187_378, 121, 600.0);
    recs.extend(evenly("43.175.229.18:17883", 27_301, 7, 600.0));
    let report = analyze_capture(&recs, &Allowlist::new()).map_err(|e| e.to_string())?;
    let rate = |d: &str| {
        report
            .endpoint(d)
            .and_then(|e| e.mean_rate_bps)
            .unwrap_or(f64::NAN)
    };
    let (p, s) = (rate("43.175.228.18:17883"), rate("43.175.229.18:17883"));
    check!((p - 2498.37).abs() <= 0.01, "primary rate {p}");
    check!((s - 364.01).abs() <= 0.01, "secondary rate {s}");

    let mut rng = StdRng::seed_from_u64(0x7E1E);
    for case in 0..500 {
        let snap = random_snapshot(&mut rng);
        let clock: u64 = rng.gen();
        let doc = synthesize_report(&snap, clock).map_err(|e| e.to_string())?;
        let back = parse_report(&doc).map_err(|e| format!("case {case}: {e}"))?;
        check!(
            back.snapshot == snap && back.msg_id == clock.to_string(),
            "case {case} differs"
        );
    }

    let sample = parse_report(SAMPLE_REPORT).map_err(|e| e.to_string())?;
    let b = sample
        .snapshot
        .battery
        .as_ref()
        .ok_or("sample has no battery")?;
    let yaw = sample.snapshot.imu.ok_or("sample has no imu")?.yaw;
    check!(
        b.soc == 44 && b.current == -1327 && yaw == 22.78,
        "sample: soc {}, current {}, yaw {yaw}",
        b.soc,
        b.current
    );
    Ok(format!(
        "rates {p:.2} and {s:.2} bits/s; 500 round trips; sample soc 44, current -1327, yaw 22.78"
    ))
}

fn property_suites() -> Check {
    let mut rng = StdRng::seed_from_u64(0x9);

    for case in 0..1000 {
        let mut data = vec![0u8; rng.gen_range(0..2048)];
        rng.fill(&mut data[..]);
        let seed: u32 = rng.gen();
        let t = if rng.gen_bool(0.5) {
            TransformProfile::IdentityZero
        } else {
            TransformProfile::IndexByte
        };
        let twice = lcg::layer1_apply(&lcg::layer1_apply(&data, seed, t), seed, t);
        check!(twice == data, "layer1 involution fails in case {case}");
    }

    for case in 0..1000 {
        let header = if rng.gen_bool(0.5) {
            FmxHeader::main_text(rng.gen(), rng.gen(), rng.gen())
        } else {
            FmxHeader::appendix(rng.gen(), rng.gen(), rng.gen(), rng.gen())
        };
        let bytes = header.serialize().map_err(|e| e.to_string())?;
        let parsed =
            container::parse_header(&bytes, header.profile()).map_err(|e| e.to_string())?;
        check!(parsed == header, "header case {case} parses differently");
        check!(
            parsed.serialize().map_err(|e| e.to_string())? == bytes,
            "header case {case} not bit-exact"
        );
    }

    let hosts: Vec<String> = (0..64)
        .map(|i| format!("10.{}.{}.1", i % 4, i / 16))
        .collect();
    let pool = [
        "10.0.0.0/16",
        "10.1.0.0/16",
        "10.0.0.0/8",
        "10.2.1.1",
        "10.3.0.1",
        "host.example",
    ];
    for case in 0..500 {
        let recs: Vec<CaptureRecord> = (0..rng.gen_range(1..30))
            .map(|i| CaptureRecord {
                timestamp: i as f64,
                destination: format!("{}:17883", hosts[rng.gen_range(0..hosts.len())]),
                byte_count: 100,
                payload_hex: None,
            })
            .collect();
        let base: Vec<&str> = pool.iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
        let mut more = base.clone();
        more.extend(pool.iter().copied().filter(|_| rng.gen_bool(0.3)));
        let small = analyze_capture(&recs, &Allowlist::parse(&base)).map_err(|e| e.to_string())?;
        let big = analyze_capture(&recs, &Allowlist::parse(&more)).map_err(|e| e.to_string())?;
        check!(
            big.flagged.iter().all(|f| small.flagged.contains(f)),
            "allowlist case {case} not monotone"
        );
    }

    let cfg =
        EndpointConfig::new(Default::default(), true, 1, 10, 300).map_err(|e| e.to_string())?;
    let t0 = 1_757_431_580;
    let sched = ReportSchedule::new(&cfg, t0);
    let n = 1_000_000u64;
    let mut seen = 0u64;
    for (k, t) in sched.emissions_in(t0, t0 + n * 300).enumerate() {
        check!(t == t0 + k as u64 * 300, "emission {k} at {t}");
        seen += 1;
    }
    check!(seen == n, "{seen} emissions");
    Ok("layer1 involution, header bit-exactness, allowlist monotonicity, 10^6-interval periodicity".into())
}

fn main() {
    // `cargo test -- --list` and friends: nothing to enumerate.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [Criterion; 9] = [
        ("Blowfish correctness", blowfish_vectors),
        ("pipeline round trip", pipeline_round_trip),
        ("script compatibility (dec2)", dec2_compatibility),
        ("LCG fidelity", lcg_fidelity),
        ("attack recovery", attack_recovery),
        ("suffix-search scale", suffix_scale),
        ("orchestrator conformance", orchestrator_conformance),
        ("telemetry arithmetic", telemetry_arithmetic),
        ("property suites", property_suites),
    ];
    let mut failed = 0;
    for (n, (name, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail} [{secs:.2}s]", n + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {why} [{secs:.2}s]", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
