//! `vibraforge` command line.
//!
//! Data goes to standard output (or `-o`/`--out`), diagnostics to standard
//! error. Exit status: 0 success, 1 validation or usage error, 2 I/O or
//! parse error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;
use vibraforge::pattern::{compile, format_commands, import_csv, parse_commands, PatternDocument, PatternError};
use vibraforge::report::{
    bandwidth_report, battery_report, latency_report, voltage_sweep, BatteryScenario, ReportError,
};
use vibraforge::segment::segment;
use vibraforge::sim::{ChainSim, Fault, LatencyModel, SimConfig, SimError, Topology, DEFAULT_SEED};
use vibraforge::transport::{dispatch, encode_record, schedule, SimLoopback, TransportError};

#[derive(Debug, Parser)]
#[command(name = "vibraforge", version, about = "Vibrotactile chain control plane")]
pub struct Cli {
    /// Seed for seeded fault injection; overrides VIBRAFORGE_SEED.
    #[arg(long, global = true, env = "VIBRAFORGE_SEED")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment a sample-CSV waveform into 200 Hz command frames.
    Transcode {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compile a pattern document into timed commands.
    Compile {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Schedule timed commands and run them through the chain simulator,
    /// printing the event log.
    Simulate {
        input: PathBuf,
        #[arg(long)]
        topology: PathBuf,
        /// `bitflip:CHAIN:HOP:FRAME:BIT[:CMD]` or `drop:CHAIN:HOP[:CMD]`.
        #[arg(long = "fault")]
        faults: Vec<String>,
        /// Additional seeded single-bit faults.
        #[arg(long, default_value_t = 0)]
        random_faults: usize,
        /// Also write the dispatched packets as a record file.
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        latency: LatencyArgs,
    },
    /// Print one of the analysis tables.
    Report {
        kind: ReportKindArg,
        #[arg(long)]
        topology: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Packets for the bandwidth run.
        #[arg(long, default_value_t = 1000)]
        packets: usize,
        /// Extra battery scenario `label:units:active:capacity_mah`.
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        #[command(flatten)]
        latency: LatencyArgs,
    },
    /// Run the HTTP service on 127.0.0.1.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[command(flatten)]
        latency: LatencyArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportKindArg {
    Latency,
    Voltage,
    Battery,
    Bandwidth,
}

#[derive(Debug, Args)]
pub struct LatencyArgs {
    /// One-way BLE latency override in ms.
    #[arg(long)]
    pub ble_ms: Option<f64>,
    /// Per-hop forwarding time override in µs.
    #[arg(long)]
    pub hop_us: Option<f64>,
}

impl LatencyArgs {
    fn apply(&self, mut latency: LatencyModel) -> LatencyModel {
        if let Some(ms) = self.ble_ms {
            latency.ble_one_way_ms = ms;
        }
        if let Some(us) = self.hop_us {
            latency.hop_us = us;
        }
        latency
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Io { .. } | Self::Parse(_) => 2,
        }
    }
}

impl From<PatternError> for CliError {
    fn from(e: PatternError) -> Self {
        match e {
            PatternError::Parse { .. } => Self::Parse(format!("ParseError: {e}")),
            other => Self::Validation(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => Self::Parse(format!("ParseError: {e}")),
            other => Self::Validation(other.to_string()),
        }
    }
}

impl From<TransportError> for CliError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Sim(s) => s.into(),
            TransportError::Parse { .. } => Self::Parse(e.to_string()),
            TransportError::Io(source) => Self::Io {
                path: PathBuf::from("-"),
                source,
            },
            other => Self::Validation(other.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Sim(s) => s.into(),
            ReportError::Transport(t) => t.into(),
            ReportError::Pattern(p) => p.into(),
            ReportError::Parse { .. } => Self::Parse(e.to_string()),
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            // clap already formats usage text
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match &cli.command {
        Command::Transcode { input, output } => {
            let waveform = import_csv(&read(input)?)?;
            let stream = segment(&waveform).map_err(|e| CliError::Validation(e.to_string()))?;
            emit(output.as_deref(), stream.to_text().as_bytes())
        }
        Command::Compile { input, output } => {
            let doc = PatternDocument::from_json(&read(input)?)?;
            emit(output.as_deref(), format_commands(&compile(&doc)?).as_bytes())
        }
        Command::Simulate {
            input,
            topology,
            faults,
            random_faults,
            record,
            output,
            latency,
        } => {
            let commands = parse_commands(&read(input)?)?;
            let config = SimConfig::from_json(&read(topology)?)?;
            let mut sim = ChainSim::new(config.topology.clone(), latency.apply(config.latency))?.with_seed(seed);
            for text in faults {
                let fault = Fault::parse(text).map_err(CliError::Validation)?;
                sim.inject_fault(fault)?;
            }
            for fault in Fault::random(&config.topology, seed, *random_faults) {
                sim.inject_fault(fault)?;
            }
            let plan = schedule(&commands);
            for s in &plan.spills {
                eprintln!(
                    "spill: `{}` scheduled for tick {} sent at tick {}",
                    s.command, s.scheduled_tick, s.delivered_tick
                );
            }
            if let Some(path) = record {
                write(path, &encode_record(&plan.packets)?)?;
            }
            let mut endpoint = SimLoopback::new(sim);
            dispatch(&plan.packets, &mut endpoint)?;
            let mut sim = endpoint.into_sim();
            sim.run_to_idle();
            let mut out = String::new();
            for event in sim.event_log() {
                out.push_str(&event.to_string());
                out.push('\n');
            }
            let stats = sim.stats();
            eprintln!(
                "packets={} injected={} consumed={} dropped={} exited={} spills={}",
                plan.packets.len(),
                stats.injected,
                stats.consumed,
                stats.dropped,
                stats.exited,
                plan.spills.len()
            );
            emit(output.as_deref(), out.as_bytes())
        }
        Command::Report {
            kind,
            topology,
            out,
            packets,
            scenarios,
            latency,
        } => {
            let config = match topology {
                Some(path) => SimConfig::from_json(&read(path)?)?,
                None => SimConfig {
                    topology: default_topology(*kind),
                    latency: LatencyModel::default(),
                },
            };
            let lat = latency.apply(config.latency);
            let report = match kind {
                ReportKindArg::Latency => latency_report(&config.topology, &lat)?,
                ReportKindArg::Voltage => voltage_sweep(&config.topology)?,
                ReportKindArg::Battery => {
                    let extra = scenarios
                        .iter()
                        .map(|s| parse_scenario(s))
                        .collect::<Result<Vec<_>, _>>()?;
                    battery_report(&extra)
                }
                ReportKindArg::Bandwidth => bandwidth_report(&config.topology, &lat, *packets)?,
            };
            emit(out.as_deref(), report.to_text().as_bytes())
        }
        Command::Serve { port, latency } => {
            let runtime = tokio::runtime::Runtime::new().map_err(|source| CliError::Io {
                path: PathBuf::from("tokio runtime"),
                source,
            })?;
            runtime
                .block_on(vibraforge_server::serve(*port, latency.apply(LatencyModel::default())))
                .map_err(|source| CliError::Io {
                    path: PathBuf::from(format!("127.0.0.1:{port}")),
                    source,
                })
        }
    }
}

fn default_topology(kind: ReportKindArg) -> Topology {
    match kind {
        ReportKindArg::Latency | ReportKindArg::Voltage => Topology::uniform(1, 16),
        ReportKindArg::Battery | ReportKindArg::Bandwidth => Topology::uniform(8, 16),
    }
}

fn parse_scenario(text: &str) -> Result<BatteryScenario, CliError> {
    let bad = || CliError::Validation(format!("scenario `{text}`: expected label:units:active:capacity_mah"));
    let parts: Vec<&str> = text.split(':').collect();
    let [label, units, active, capacity] = parts[..] else {
        return Err(bad());
    };
    let scenario = BatteryScenario::new(
        label,
        units.parse().map_err(|_| bad())?,
        active.parse().map_err(|_| bad())?,
        capacity.parse().map_err(|_| bad())?,
    );
    if scenario.active > scenario.units as f64 || scenario.active < 0.0 || scenario.capacity_mah <= 0.0 {
        return Err(CliError::Validation(format!(
            "scenario `{text}`: need 0 <= active <= units and a positive capacity"
        )));
    }
    Ok(scenario)
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => write(p, bytes),
        None => std::io::stdout().lock().write_all(bytes).map_err(|source| CliError::Io {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}
