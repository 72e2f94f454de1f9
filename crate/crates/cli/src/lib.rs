//! `fmxwb`: command-line adapters over `fmx-core`.
//!
//! Exit codes: 0 success, 1 invalid input or failure, 2 key search exhausted.
//! Machine-readable results go to stdout, diagnostics to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use fmx_core::cipher::{CipherKey, PaddingMode};
use fmx_core::container::{self, HeaderProfile};
use fmx_core::keysearch::{run_attack, AttackPlan, CandidateFamily, Outcome, PlaintextDetector};
use fmx_core::lcg::{DeviceIdentity, SeedDerivationProfile, TransformProfile};
use fmx_core::orchestrator::{
    load_config, plan_startup, MasterConfig, Orchestrator, Scenario, ScriptedExecutor,
};
use fmx_core::pipeline::{self, PipelineConfig};
use fmx_core::telemetry::{
    analyze_capture, emit_block_rules, parse_report, read_capture, synthesize_report, Allowlist,
    EndpointConfig, ReportSchedule, SAMPLE_REPORT,
};
use ipnet::IpNet;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_EXHAUSTED: i32 = 2;

pub const DEFAULT_DEC2_DIR: &str = "fmx_dec2_out";

#[derive(Parser, Debug)]
#[command(
    name = "fmxwb",
    version,
    about = "FMX container, key search, orchestrator and telemetry workbench"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// FMX container and cipher operations.
    #[command(subcommand)]
    Fmx(FmxCommand),
    /// Orchestrator simulation.
    #[command(subcommand)]
    Orchestrate(OrchestrateCommand),
    /// Telemetry synthesis and capture analysis.
    #[command(subcommand)]
    Telemetry(TelemetryCommand),
}

#[derive(Subcommand, Debug)]
pub enum FmxCommand {
    /// Print the parsed header as JSON.
    Inspect {
        file: PathBuf,
        #[arg(long, default_value = "main")]
        profile: HeaderProfile,
    },
    /// Encrypt a plaintext file into an FMX container.
    Wrap(TransformArgs),
    /// Fully decrypt an FMX container.
    Unwrap(TransformArgs),
    /// Layer-2 only decryption of each input into <out-dir>/<name>.dec2.
    Dec2 {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = DEFAULT_DEC2_DIR)]
        out_dir: PathBuf,
        #[command(flatten)]
        key: KeyArgs,
    },
    /// Known-plaintext key search. Prints the search report as JSON.
    Crack {
        file: PathBuf,
        #[command(flatten)]
        identity: IdentityArgs,
        /// Search one family instead of the progressive plan.
        #[arg(long)]
        family: Option<CandidateFamily>,
        /// Candidate cap per phase.
        #[arg(long)]
        budget: Option<u64>,
        /// Suffix lengths for the suffix family, as MIN..MAX.
        #[arg(long, value_parser = parse_len_range)]
        suffix_lengths: Option<(usize, usize)>,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
    },
}

#[derive(Args, Debug)]
pub struct KeyArgs {
    /// Blowfish key as hex.
    #[arg(
        long,
        conflicts_with = "key_file",
        required_unless_present = "key_file"
    )]
    pub key: Option<String>,
    /// File holding the key as hex.
    #[arg(long)]
    pub key_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct IdentityArgs {
    #[arg(long, default_value = "E21D1000P64BKH86")]
    pub device_code: String,
    #[arg(long, default_value = "34d21p")]
    pub rf_code: String,
    #[arg(long, default_value = "04360")]
    pub bluetooth: String,
    #[arg(long, default_value = "4")]
    pub machine_type: String,
    #[arg(long, default_value_t = 1)]
    pub firmware_version: u32,
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub key: KeyArgs,
    #[command(flatten)]
    pub identity: IdentityArgs,
    /// Explicit Layer-1 seed; otherwise derived from the identity.
    #[arg(long)]
    pub seed: Option<u32>,
    #[arg(long, default_value = "main")]
    pub profile: HeaderProfile,
    #[arg(long, default_value = "zero")]
    pub padding: PaddingMode,
    #[arg(long, default_value = "zero")]
    pub transform: TransformProfile,
    /// Record and verify an MD5 checksum (appendix profile only).
    #[arg(long)]
    pub checksum: bool,
}

#[derive(Subcommand, Debug)]
pub enum OrchestrateCommand {
    /// Startup plus monitor loop for a simulated duration; writes the event log.
    Run {
        #[command(flatten)]
        setup: SimSetup,
        /// Simulated seconds to run after startup.
        #[arg(long, default_value_t = 60)]
        duration: u64,
        /// Event log path (JSON lines). Defaults to stdout.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Startup, then serve JSON-lines RPC on a Unix socket or stdin/stdout.
    Rpc {
        #[command(flatten)]
        setup: SimSetup,
        #[arg(long, conflicts_with = "stdio", required_unless_present = "stdio")]
        socket: Option<PathBuf>,
        #[arg(long)]
        stdio: bool,
        /// Stop after this many connections.
        #[arg(long)]
        max_connections: Option<usize>,
    },
}

#[derive(Args, Debug)]
pub struct SimSetup {
    /// Master config, plain JSON or FMX-wrapped. Defaults to the bundled one.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scripted child behaviour (JSON).
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Key for an FMX-wrapped config.
    #[arg(long)]
    pub key: Option<String>,
    #[arg(long)]
    pub seed: Option<u32>,
}

#[derive(Subcommand, Debug)]
pub enum TelemetryCommand {
    /// Per-endpoint byte and rate accounting over a JSON-lines capture.
    Analyze {
        capture: PathBuf,
        /// Allowed host, address or CIDR. Repeatable.
        #[arg(long = "allow")]
        allow: Vec<String>,
        /// CIDR always denied in emitted rules. Repeatable.
        #[arg(long = "policy")]
        policy: Vec<IpNet>,
        /// Write block rules here.
        #[arg(long)]
        rules_out: Option<PathBuf>,
    },
    /// Emit scheduled reportState payloads, one per line.
    Synth {
        /// Report whose snapshot is replayed. Defaults to the bundled sample.
        #[arg(long)]
        from: Option<PathBuf>,
        /// Endpoint config supplying ReportInterval.
        #[arg(long)]
        endpoints: Option<PathBuf>,
        /// First emission, microseconds since the epoch.
        #[arg(long, default_value_t = 1_757_431_580_470_452)]
        start_us: u64,
        #[arg(long, default_value_t = 1)]
        count: u64,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_len_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once("..").ok_or("expected MIN..MAX")?;
    let a = a.parse().map_err(|_| "bad MIN")?;
    let b = b.trim_start_matches('=').parse().map_err(|_| "bad MAX")?;
    Ok((a, b))
}

impl KeyArgs {
    fn load(&self) -> Result<CipherKey> {
        let text = match (&self.key, &self.key_file) {
            (Some(k), _) => k.clone(),
            (None, Some(p)) => {
                fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?
            }
            (None, None) => bail!("a key is required (--key or --key-file)"),
        };
        CipherKey::from_hex(text.trim()).context("invalid key")
    }
}

impl IdentityArgs {
    fn identity(&self) -> Result<DeviceIdentity> {
        Ok(DeviceIdentity::new(
            self.device_code.clone(),
            self.rf_code.clone(),
            self.bluetooth.clone(),
            self.machine_type.clone(),
            self.firmware_version,
        )?)
    }
}

fn seed_profile(seed: Option<u32>) -> SeedDerivationProfile {
    seed.map_or(
        SeedDerivationProfile::ReferenceMd5,
        SeedDerivationProfile::ExplicitSeed,
    )
}

impl TransformArgs {
    fn pipeline(&self) -> Result<(PipelineConfig, DeviceIdentity)> {
        let cfg = PipelineConfig {
            header_profile: self.profile,
            padding: self.padding,
            transform: self.transform,
            checksum_enabled: self.checksum,
            ..PipelineConfig::new(self.key.load()?, seed_profile(self.seed))
        };
        cfg.validate()?;
        Ok((cfg, self.identity.identity()?))
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() {
                EXIT_FAILURE
            } else {
                EXIT_OK
            };
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_FAILURE
        }
    }
}

pub fn execute(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Fmx(c) => fmx(c, out, err),
        Command::Orchestrate(c) => orchestrate(c, out, err),
        Command::Telemetry(c) => telemetry(c, out),
    }
}

fn fmx(cmd: FmxCommand, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        FmxCommand::Inspect { file, profile } => {
            let bytes = read(&file)?;
            let c = container::unwrap(&bytes, profile)?;
            let doc = serde_json::json!({
                "header": c.header,
                "payload_len": c.payload.len(),
                "block_aligned": c.payload.len() % 8 == 0,
                "size_consistent": c.size_consistent(),
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
            Ok(EXIT_OK)
        }
        FmxCommand::Wrap(a) => {
            let (cfg, id) = a.pipeline()?;
            write(&a.output, &pipeline::wrap(&read(&a.input)?, &id, &cfg)?)?;
            Ok(EXIT_OK)
        }
        FmxCommand::Unwrap(a) => {
            let (cfg, id) = a.pipeline()?;
            write(&a.output, &pipeline::load(&read(&a.input)?, &id, &cfg)?)?;
            Ok(EXIT_OK)
        }
        FmxCommand::Dec2 {
            inputs,
            out_dir,
            key,
        } => {
            let key = key.load()?;
            ensure!(
                key.as_bytes().len() == 16,
                "dec2 expects a 128-bit key (32 hex digits)"
            );
            cmd_fmx_dec2(&inputs, &out_dir, &key, err)
        }
        FmxCommand::Crack {
            file,
            identity,
            family,
            budget,
            suffix_lengths,
            workers,
        } => {
            ensure!(workers > 0, "--workers must be at least 1");
            let bytes = read(&file)?;
            let mut plan = match family {
                Some(f) => AttackPlan::single(f, budget, workers),
                None => {
                    let mut p = AttackPlan::progressive(workers);
                    if budget.is_some() {
                        for phase in &mut p.phases {
                            phase.budget = budget;
                        }
                    }
                    p
                }
            };
            if let Some((lo, hi)) = suffix_lengths {
                plan.params.suffix_min_len = lo;
                plan.params.suffix_max_len = hi;
                for phase in &mut plan.phases {
                    if phase.suffix_lengths.is_some() {
                        phase.suffix_lengths = Some((lo, hi));
                    }
                }
            }
            let report = run_attack(
                &bytes,
                &identity.identity()?,
                &plan,
                &PlaintextDetector::default(),
            )?;
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            let _ = writeln!(
                err,
                "tested {} candidates in {:.3}s ({:.0} keys/s)",
                report.total_tested,
                report.elapsed_secs,
                report.keys_per_sec()
            );
            Ok(match report.outcome {
                Outcome::Found { .. } => EXIT_OK,
                Outcome::Exhausted { .. } => EXIT_EXHAUSTED,
            })
        }
    }
}

/// Layer-2 only decryption of every input carrying the FMX magic. Inputs
/// without it are skipped with a warning; per-file errors do not stop the
/// run. Exit 0 when at least one file was written.
pub fn cmd_fmx_dec2(
    inputs: &[PathBuf],
    out_dir: &Path,
    key: &CipherKey,
    err: &mut dyn Write,
) -> Result<i32> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut processed = 0;
    for input in inputs {
        let shown = input.display();
        let bytes = match fs::read(input) {
            Ok(b) => b,
            Err(e) => {
                writeln!(err, "[error] {shown}: {e}")?;
                continue;
            }
        };
        if !container::detect(&bytes) {
            writeln!(err, "[skip] {shown} (no FMX magic)")?;
            continue;
        }
        let Some(name) = input.file_name() else {
            writeln!(err, "[error] {shown}: no file name")?;
            continue;
        };
        let mut target = name.to_os_string();
        target.push(".dec2");
        let target = out_dir.join(target);
        let plain = pipeline::layer2_only_decrypt(&bytes, key)?;
        match fs::write(&target, plain) {
            Ok(()) => {
                writeln!(err, "[ok] {shown} -> {}", target.display())?;
                processed += 1;
            }
            Err(e) => writeln!(err, "[error] {}: {e}", target.display())?,
        }
    }
    if processed == 0 {
        writeln!(err, "no FMX inputs processed")?;
        return Ok(EXIT_FAILURE);
    }
    Ok(EXIT_OK)
}

fn load_sim(setup: &SimSetup) -> Result<(MasterConfig, Scenario)> {
    let cfg = match &setup.config {
        None => fmx_core::orchestrator::reference_config(),
        Some(path) => {
            let bytes = read(path)?;
            let crypto = match &setup.key {
                Some(k) => Some(PipelineConfig::new(
                    CipherKey::from_hex(k)?,
                    seed_profile(setup.seed),
                )),
                None => None,
            };
            let id = DeviceIdentity::sample();
            load_config(&bytes, crypto.as_ref().map(|c| (c, &id)))?
        }
    };
    let scenario = match &setup.scenario {
        None => Scenario::default(),
        Some(p) => {
            serde_json::from_slice(&read(p)?).with_context(|| format!("parsing {}", p.display()))?
        }
    };
    Ok((cfg, scenario))
}

fn start(setup: &SimSetup) -> Result<Orchestrator<ScriptedExecutor>> {
    let (cfg, scenario) = load_sim(setup)?;
    let plan = plan_startup(&cfg)?;
    let mut o = Orchestrator::new(cfg, ScriptedExecutor::new(scenario))?;
    o.run_startup(&plan);
    Ok(o)
}

fn orchestrate(cmd: OrchestrateCommand, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        OrchestrateCommand::Run {
            setup,
            duration,
            log,
        } => {
            let mut o = start(&setup)?;
            o.run_for(duration * 1000);
            match log {
                Some(path) => {
                    let f = fs::File::create(&path)
                        .with_context(|| format!("creating {}", path.display()))?;
                    o.write_event_log(std::io::BufWriter::new(f))?;
                }
                None => o.write_event_log(&mut *out)?,
            }
            for name in o.service_names() {
                writeln!(err, "{name}: {:?}", o.state_of(name).expect("listed"))?;
            }
            Ok(EXIT_OK)
        }
        OrchestrateCommand::Rpc {
            setup,
            socket,
            stdio,
            max_connections,
        } => {
            let mut o = start(&setup)?;
            if stdio {
                o.serve_stream(std::io::stdin().lock(), &mut *out)?;
            } else {
                let path = socket.expect("clap requires --socket without --stdio");
                let listener = std::os::unix::net::UnixListener::bind(&path)
                    .with_context(|| format!("binding {}", path.display()))?;
                writeln!(err, "listening on {}", path.display())?;
                let served = o.serve(&listener, max_connections);
                let _ = fs::remove_file(&path);
                served?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn telemetry(cmd: TelemetryCommand, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        TelemetryCommand::Analyze {
            capture,
            allow,
            policy,
            rules_out,
        } => {
            let f = fs::File::open(&capture)
                .with_context(|| format!("opening {}", capture.display()))?;
            let records = read_capture(BufReader::new(f))?;
            let report = analyze_capture(&records, &Allowlist::parse(&allow))?;
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            if let Some(path) = rules_out {
                write(&path, emit_block_rules(&report, &policy).as_bytes())?;
            }
            Ok(EXIT_OK)
        }
        TelemetryCommand::Synth {
            from,
            endpoints,
            start_us,
            count,
        } => {
            let doc = match &from {
                Some(p) => String::from_utf8(read(p)?).context("report is not UTF-8")?,
                None => SAMPLE_REPORT.to_string(),
            };
            let snapshot = parse_report(&doc)?.snapshot;
            let cfg = match &endpoints {
                Some(p) => EndpointConfig::from_json(&String::from_utf8(read(p)?)?)?,
                None => EndpointConfig::new(Default::default(), false, 0, 0, 300)?,
            };
            let sched = ReportSchedule {
                t0: 0,
                interval: cfg.report_interval * 1_000_000,
            };
            for k in 0..count {
                writeln!(
                    out,
                    "{}",
                    synthesize_report(&snapshot, start_us + sched.emission(k))?
                )?;
            }
            Ok(EXIT_OK)
        }
    }
}
