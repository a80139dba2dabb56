//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input (configuration, map or trace
//! contents), 2 runtime failure (I/O, simulation fault).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::experiment::run_comparison;
use crate::roadnet::{self, RoadnetError, SvgOptions};
use crate::scenario::{Scenario, ScenarioError};
use crate::sim::{SimError, Simulation};
use crate::spacetime::spacetime;

/// Environment variable holding the log filter (e.g. `info`, `mobisim=debug`).
pub const LOG_ENV: &str = "MOBISIM_LOG";

#[derive(Debug, Parser)]
#[command(name = "mobisim", version, about = "Vehicular mobility and cellular crowdsensing simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse an OSM file and write its `.netcache` next to it.
    Convert { osm: PathBuf },
    /// Run one scenario and write trajectory, link and transmission CSVs.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train an SNR map, then compare periodic and predictive scheduling.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        training_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a map (`.osm` or `.netcache`) as SVG.
    ExportSvg { map: PathBuf, out: PathBuf },
    /// Project a trajectory trace onto distance driven per vehicle.
    Spacetime {
        trace: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        vehicles: Vec<u32>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Invalid(_) => ExitCode::from(1),
            CliError::Runtime(_) => ExitCode::from(2),
        }
    }
}

impl From<RoadnetError> for CliError {
    fn from(e: RoadnetError) -> Self {
        match e {
            RoadnetError::Io(_) => CliError::Runtime(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => CliError::Runtime(e.to_string()),
            ScenarioError::Map(m) => m.into(),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config { .. } => CliError::Invalid(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Convert { osm } => {
            let cache = roadnet::convert(&osm)?;
            println!("{}", cache.display());
        }
        Command::Simulate { scenario, seed, out } => {
            let scenario = Scenario::load(&scenario)?;
            let mut config = scenario.sim_config();
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let network = scenario.network()?;
            let map = scenario.snr_map()?;
            let dir = out.unwrap_or_else(|| scenario.output_dir());
            let output = Simulation::execute(network, config, map)?;
            output.write_to(&dir)?;
            println!("{}", output.report);
            println!("outputs written to {}", dir.display());
        }
        Command::Compare { scenario, seeds, training_seed, out } => {
            let scenario = Scenario::load(&scenario)?;
            let network = scenario.network()?;
            let report = run_comparison(network, &scenario.sim_config(), &seeds, training_seed)?;
            let dir = out.unwrap_or_else(|| scenario.output_dir());
            std::fs::create_dir_all(&dir).map_err(io(&dir))?;
            report.map.save(&dir.join("snr_map.csv")).map_err(|e| CliError::Runtime(e.to_string()))?;
            let summary = dir.join("comparison.csv");
            std::fs::write(&summary, report.summary_csv()).map_err(io(&summary))?;
            println!("{report}");
            println!("outputs written to {}", dir.display());
        }
        Command::ExportSvg { map, out } => {
            let (network, _) = roadnet::load_map(&map)?;
            roadnet::export_svg(&network, &out, &SvgOptions::default())?;
            println!("{}", out.display());
        }
        Command::Spacetime { trace, vehicles, out } => {
            let text = std::fs::read_to_string(&trace).map_err(io(&trace))?;
            let csv = spacetime(&text, &vehicles).map_err(|e| CliError::Invalid(e.to_string()))?;
            match out {
                Some(path) => std::fs::write(&path, csv).map_err(io(&path))?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

/// Entry point used by the binary.
pub fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
