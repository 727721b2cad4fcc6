use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flowvtr::harness::{
    builtin, evaluate, load_scenario, run_repeat, run_teach, save_scenario, trace_rows, HarnessError, Metrics, RunLog,
    Scenario, BUILTIN_NAMES,
};
use flowvtr::planner::{generate_library, save_library, LibraryConfig, PlannerError};
use flowvtr::teach::{load_map, save_map, MapError};
use flowvtr::world::WorldError;

const EXIT_FILE: u8 = 3;
const EXIT_SCHEMA: u8 = 4;
const EXIT_RUN: u8 = 5;

#[derive(Parser)]
#[command(name = "flowvtr", version, about = "Feature-flow visual teach and repeat in a synthetic world")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drive the scenario's waypoint route and write the keyframe map.
    Teach {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the teach run log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Repeat a taught route and write the run log.
    Repeat {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a repeat log against its teach log.
    Eval {
        #[arg(long)]
        repeat: PathBuf,
        #[arg(long)]
        teach: PathBuf,
    },
    /// Sample the trajectory candidate library.
    GenTrajLib {
        #[arg(long)]
        out: PathBuf,
        /// Take the library settings from this scenario instead of the defaults.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Export the tracking trace of a repeat log as CSV.
    Trace {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one of the built-in scenarios to a file.
    GenScenario {
        /// One of: corridor, s-curve, straight, dynamic-corridor.
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Harness(HarnessError),
    Usage(String),
    Csv(PathBuf, csv::Error),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        Self::Harness(e)
    }
}

impl From<MapError> for CliError {
    fn from(e: MapError) -> Self {
        Self::Harness(e.into())
    }
}

impl From<PlannerError> for CliError {
    fn from(e: PlannerError) -> Self {
        Self::Harness(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Csv(_, e) if e.is_io_error() => EXIT_FILE,
            Self::Csv(..) => EXIT_RUN,
            Self::Harness(e) => match e {
                HarnessError::Io { .. }
                | HarnessError::Map(MapError::Io { .. })
                | HarnessError::Planner(PlannerError::Io { .. })
                | HarnessError::World(WorldError::Io { .. }) => EXIT_FILE,
                HarnessError::Schema(_)
                | HarnessError::VersionMismatch { .. }
                | HarnessError::Map(_)
                | HarnessError::Planner(PlannerError::Schema(_) | PlannerError::VersionMismatch { .. })
                | HarnessError::World(WorldError::Schema(_) | WorldError::Version { .. }) => EXIT_SCHEMA,
                _ => EXIT_RUN,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Harness(e) => write!(f, "{e}"),
            Self::Usage(m) => write!(f, "{m}"),
            Self::Csv(p, e) => write!(f, "writing {}: {e}", p.display()),
        }
    }
}

fn scenario_with_world(path: &Path) -> Result<(Scenario, flowvtr::world::World), CliError> {
    let scenario = load_scenario(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let world = scenario.resolve_world(base)?;
    Ok((scenario, world))
}

fn print_metrics(m: &Metrics) {
    println!("end_point_distance {:.3}", m.end_point_distance);
    println!("path_completed {}", m.path_completed);
    match m.min_clearance {
        Some(c) => println!("min_clearance {c:.3}"),
        None => println!("min_clearance none"),
    }
    println!("collision {}", m.collision);
    if let Some(ms) = m.mean_tick_ms {
        println!("mean_tick_ms {ms:.3}");
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Teach { scenario, out, log } => {
            let (scenario, world) = scenario_with_world(&scenario)?;
            let (map, teach_log) = run_teach(&scenario, &world)?;
            save_map(&map, &out)?;
            if let Some(path) = log {
                teach_log.save(&path)?;
            }
            println!("keyframes {}", map.len());
            println!("ticks {}", teach_log.ticks.len());
        }
        Command::Repeat { map, scenario, out } => {
            let map = load_map(&map)?;
            let (scenario, world) = scenario_with_world(&scenario)?;
            let run = run_repeat(&map, &scenario, &world)?;
            run.log.save(&out)?;
            print_metrics(&run.metrics);
        }
        Command::Eval { repeat, teach } => {
            let repeat = RunLog::load(&repeat)?;
            let teach = RunLog::load(&teach)?;
            print_metrics(&evaluate(&repeat, &teach));
        }
        Command::GenTrajLib { out, scenario } => {
            let cfg = match scenario {
                Some(p) => load_scenario(&p)?.planner.library,
                None => LibraryConfig::default(),
            };
            let library = generate_library(&cfg)?;
            save_library(&library, &out)?;
            println!("candidates {}", library.candidates.len());
        }
        Command::Trace { log, out } => {
            let log = RunLog::load(&log)?;
            let mut w = csv::Writer::from_path(&out).map_err(|e| CliError::Csv(out.clone(), e))?;
            for row in trace_rows(&log) {
                w.serialize(row).map_err(|e| CliError::Csv(out.clone(), e))?;
            }
            w.flush().map_err(|e| CliError::Csv(out.clone(), e.into()))?;
        }
        Command::GenScenario { name, seed, out } => {
            let scenario = builtin(&name, seed).ok_or_else(|| {
                CliError::Usage(format!("unknown scenario {name:?}; expected one of {}", BUILTIN_NAMES.join(", ")))
            })?;
            save_scenario(&scenario, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("flowvtr: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
