//! Command-line front end.
//!
//! `wattrace [OPTIONS] -- COMMAND...` measures a command (the `measure`
//! subcommand is implied); `analyze`, `schedule` and `probes` expose the
//! evaluation tooling.

mod commands;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::probes::simulated::ProfileSpec;
use crate::runner::exit_code;

pub use commands::{main_analyze, main_measure, main_probes, main_schedule};

/// Environment variable overriding `--probe`.
pub const PROBE_ENV: &str = "WATTRACE_PROBE";
/// Environment variable holding the log filter (default `warn`).
pub const LOG_ENV: &str = "WATTRACE_LOG";
/// Output used when `--output` is absent and stdout is a terminal.
pub const DEFAULT_OUTPUT: &str = "energy.csv";

const EXIT_CODES: &str = "\
Exit codes:
  <n>    the command's own exit code when it exits normally
  64     usage error
  70     internal failure (probe, trace or I/O error)
  124    the command hit --max-execution and was terminated
  126    the command is not executable
  127    the command was not found
  128+n  the command was killed by signal n";

#[derive(Debug, Parser)]
#[command(
    name = "wattrace",
    version,
    about = "Measures the energy consumption of a command by sampling hardware counters at a fixed interval",
    after_help = EXIT_CODES,
    args_conflicts_with_subcommands = true,
    subcommand_negates_reqs = true
)]
pub struct Cli {
    #[command(flatten)]
    pub measure: CliConfig,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measure a command (the default when no subcommand is given)
    #[command(after_help = EXIT_CODES)]
    Measure(CliConfig),
    /// Summarize, aggregate and compare runs stored as <DIR>/<condition>/<run>.csv
    Analyze(AnalyzeArgs),
    /// Print a randomized run order for repeated measurements
    Schedule(ScheduleArgs),
    /// List the probes and metrics available on this machine
    Probes(ProbesArgs),
}

/// Which backends to sample.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbeSelection {
    /// Everything that initializes on this host.
    Auto,
    /// A deterministic synthetic power source.
    Simulated(ProfileSpec),
}

impl FromStr for ProbeSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "auto" => Ok(ProbeSelection::Auto),
            other => match other.strip_prefix("simulated:") {
                Some(spec) => spec.parse().map(ProbeSelection::Simulated).map_err(|e| e.to_string()),
                None => Err(format!("expected `auto` or `simulated:<profile>`, got {other:?}")),
            },
        }
    }
}

impl fmt::Display for ProbeSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbeSelection::Auto => f.write_str("auto"),
            ProbeSelection::Simulated(_) => f.write_str("simulated"),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CliConfig {
    /// Duration of the interval between two measurements in milliseconds
    #[arg(
        short = 'i',
        long = "interval",
        value_name = "INTERVAL",
        default_value_t = 100,
        value_parser = clap::value_parser!(u64).range(1..)
    )]
    pub interval_ms: u64,

    /// The maximum duration of the command execution in seconds (0 = no limit)
    #[arg(short = 'm', long = "max-execution", value_name = "MAX_EXECUTION", default_value_t = 0)]
    pub max_execution_s: u64,

    /// CSV trace destination; `-` for stdout [default: energy.csv on a terminal, stdout otherwise]
    #[arg(short = 'o', long = "output", value_name = "OUTPUT")]
    pub output_path: Option<PathBuf>,

    /// Write the command's stdout and stderr (interleaved) to this file
    #[arg(long = "command-output", value_name = "COMMAND_OUTPUT")]
    pub command_output_path: Option<PathBuf>,

    /// Display a summary of the energy consumption during the execution of the command
    #[arg(long)]
    pub summary: bool,

    /// Probe backends: `auto`, or `simulated:<profile>` where profile is
    /// constant:W | step:T:W0:W1 | sine:BASE:AMP:PERIOD | playback:FILE,
    /// optionally followed by @unit=J,width=BITS,noise=SIGMA,seed=N
    #[arg(long = "probe", value_name = "PROBE", env = PROBE_ENV, default_value = "auto")]
    pub probe_selection: ProbeSelection,

    /// Leave out the `#` metadata lines at the top of the trace
    #[arg(long)]
    pub no_metadata: bool,

    /// Command to measure, with its arguments
    #[arg(value_name = "COMMAND", last = true, required = true, num_args = 1..)]
    pub argv: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Directory holding one sub-directory of trace CSVs per condition
    #[arg(value_name = "DIR")]
    pub dir: PathBuf,

    /// Condition used as the baseline for comparisons
    #[arg(long, default_value = "IDLE")]
    pub baseline: String,

    /// Write an SVG figure here, with its data in a sibling .csv file
    #[arg(long, value_name = "SVG")]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScheduleArgs {
    /// Conditions to interleave
    #[arg(value_name = "CONDITION", required = true, num_args = 1..)]
    pub conditions: Vec<String>,

    /// Runs per condition
    #[arg(short = 'r', long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub repetitions: u64,

    /// Shuffle seed; a random one is chosen and printed when absent
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ProbesArgs {
    /// Print the session schema as JSON
    #[arg(long)]
    pub json: bool,
}

/// Parses a full argument vector (program name first).
pub fn parse_args<I, T>(argv: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(argv)
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env)
        .format(|buf, record| {
            use std::io::Write;
            writeln!(buf, "wattrace: {}: {}", record.level().as_str().to_lowercase(), record.args())
        })
        .try_init();
}

/// Entry point for the binary; returns the process exit code.
pub fn main() -> i32 {
    init_logging();
    let cli = match parse_args(std::env::args_os()) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit_code::USAGE } else { 0 };
        }
    };
    run(cli)
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        None => main_measure(&cli.measure),
        Some(Command::Measure(config)) => main_measure(&config),
        Some(Command::Analyze(args)) => main_analyze(&args),
        Some(Command::Schedule(args)) => main_schedule(&args),
        Some(Command::Probes(args)) => main_probes(&args),
    }
}
