//! `splitshare`: place, route and simulate modular multi-modal models on
//! edge devices.
//!
//! Exit codes: 0 success, 1 input or validation error, 2 infeasible
//! placement or routing, 3 brute-force search space over its limit.

mod commands;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use splitshare_core::{parse_scenario, Scenario, ScenarioError};

/// Directory searched for scenario files given by bare name.
pub const SCENARIO_DIR_ENV: &str = "SPLITSHARE_SCENARIOS";

#[derive(Debug, Parser)]
#[command(name = "splitshare", version, about = "Split-and-share placement and simulation of multi-modal models on edge devices")]
pub struct Cli {
    /// Output format.
    #[arg(long, short = 'f', value_enum, default_value_t = Format::Table, global = true)]
    pub format: Format,
    /// More detail on stderr and in tables.
    #[arg(long, short = 'v', action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario file and list every violation.
    Validate(ScenarioArg),
    /// Place the distinct modules greedily (or optimally with --upper).
    Place(PlaceArgs),
    /// Route the trace over a placement and show analytic latencies.
    Route(RouteArgs),
    /// Simulate the trace and report latency, queuing and memory.
    Simulate(SimulateArgs),
    /// Per-model cost and latency table plus a deployment-mode comparison.
    Compare(CompareArgs),
    /// Greedy against brute force on seeded random instances.
    Sweep(sweep::SweepArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArg {
    /// Scenario file; bare names are also looked up in $SPLITSHARE_SCENARIOS.
    pub scenario: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlaceArgs {
    #[command(flatten)]
    pub scenario: ScenarioArg,
    /// Exhaustive search for the placement with the least summed latency.
    #[arg(long)]
    pub upper: bool,
    /// Write the placement as JSON.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    /// Leave cloud devices out.
    #[arg(long)]
    pub edge_only: bool,
    /// Fill leftover memory with replicas after placing.
    #[arg(long)]
    pub replicate: bool,
    /// Leave already-placed heads out of the encoder completion time.
    #[arg(long)]
    pub encoders_only_sum: bool,
}

#[derive(Debug, Args)]
pub struct PlacementSource {
    /// Placement file from `place --out`; by default a greedy placement is
    /// computed.
    #[arg(long, short = 'p')]
    pub placement: Option<PathBuf>,
    /// Compute a greedy placement first (the default without --placement).
    #[arg(long, conflicts_with = "placement")]
    pub auto: bool,
    /// Leave cloud devices out.
    #[arg(long)]
    pub edge_only: bool,
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    #[command(flatten)]
    pub scenario: ScenarioArg,
    #[command(flatten)]
    pub source: PlacementSource,
    /// Exhaustive joint search per request instead of per-module choice.
    #[arg(long)]
    pub brute: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Admission {
    /// At arrival.
    Pipelined,
    /// After the previous request's encoders finish.
    Coarse,
    /// After the previous request completes.
    Serial,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArg,
    #[command(flatten)]
    pub source: PlacementSource,
    /// Share modules across models (the default).
    #[arg(long, overrides_with = "no_share")]
    pub share: bool,
    /// Give every model its own copy of each module.
    #[arg(long, overrides_with = "share")]
    pub no_share: bool,
    /// Run each request's encoders one after another.
    #[arg(long)]
    pub sequential: bool,
    /// When a request may start sending its inputs.
    #[arg(long, value_enum, default_value_t = Admission::Pipelined)]
    pub admission: Admission,
    /// Include module loading from time zero.
    #[arg(long)]
    pub end_to_end: bool,
    /// Print the event timeline (Gantt text, or CSV/JSON events).
    #[arg(long)]
    pub timeline: bool,
    /// Repeat with arrival jitter and report the mean.
    #[arg(long, default_value_t = 1)]
    pub repeat: u32,
    /// Largest arrival perturbation in seconds for --repeat.
    #[arg(long, default_value_t = 0.05)]
    pub jitter: f64,
    /// Seed for the --repeat jitter.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub scenario: ScenarioArg,
    #[command(flatten)]
    pub source: PlacementSource,
}

/// Failure carrying the process exit code.
#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Infeasible(anyhow::Error),
    Guard(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Infeasible(_) => 2,
            Failure::Guard(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Infeasible(e) | Failure::Guard(e) => e,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

pub type CmdResult = Result<String, Failure>;

/// Resolves `path` directly, then under $SPLITSHARE_SCENARIOS.
pub fn resolve_scenario(path: &Path) -> Result<PathBuf, Failure> {
    if path.exists() {
        return Ok(path.to_owned());
    }
    if let Some(dir) = std::env::var_os(SCENARIO_DIR_ENV) {
        let candidate = Path::new(&dir).join(path);
        if candidate.exists() {
            return Ok(candidate);
        }
    }
    Err(Failure::Input(anyhow::anyhow!(
        "scenario `{}` not found (also looked in ${SCENARIO_DIR_ENV})",
        path.display()
    )))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    let path = resolve_scenario(path)?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::Input(anyhow::anyhow!("reading {}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| {
        let detail = match &e {
            ScenarioError::Invalid(vs) => vs
                .iter()
                .map(|v| format!("\n  - {v}"))
                .collect::<String>(),
            _ => String::new(),
        };
        Failure::Input(anyhow::anyhow!("{}: {e}{detail}", path.display()))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(a) => commands::validate(&cli, a),
        Command::Place(a) => commands::place(&cli, a),
        Command::Route(a) => commands::route(&cli, a),
        Command::Simulate(a) => commands::simulate(&cli, a),
        Command::Compare(a) => commands::compare(&cli, a),
        Command::Sweep(a) => sweep::run(&cli, a),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
