use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ecomerge::engine::{run, ControllerKind, EngineParams};
use ecomerge::harness::{self, Summary};
use ecomerge::scenario::{sample_scenario, Scenario, HOMOGENEOUS_MASS_LBS};
use ecomerge::MonteCarloConfig;

const EXIT_CONFIG: u8 = 2;
const EXIT_COLLISION: u8 = 3;

/// Merge-coordination simulator: centralized CBF controller vs. FIFO.
#[derive(Parser, Debug)]
#[command(name = "ecomerge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one scenario under one controller.
    Run(RunArgs),
    /// Run a paired Monte Carlo batch and write runs.csv, summary.json and histograms.
    Batch(BatchArgs),
    /// Print the comparison table of a finished batch.
    Compare {
        /// Directory holding summary.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the sampled scenario for a seed as JSON.
    ExportScenario(ExportArgs),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Fix every vehicle at the homogeneous-traffic mass.
    #[arg(long)]
    homogeneous: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulate this scenario file instead of sampling one.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Controller::Ccbf)]
    controller: Controller,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BatchArgs {
    #[command(flatten)]
    common: Common,
    /// Overrides the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, env = "ECOMERGE_PARALLELISM")]
    parallelism: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Controller {
    Ccbf,
    Fifo,
}

impl From<Controller> for ControllerKind {
    fn from(c: Controller) -> Self {
        match c {
            Controller::Ccbf => ControllerKind::Ccbf,
            Controller::Fifo => ControllerKind::Fifo,
        }
    }
}

enum Failure {
    Config(anyhow::Error),
    Other(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Other(e.into())
    }
}

fn load_config(common: &Common) -> Result<MonteCarloConfig, Failure> {
    let mut cfg = MonteCarloConfig::load(&common.config)
        .with_context(|| format!("loading config {}", common.config.display()))
        .map_err(Failure::Config)?;
    if common.homogeneous && cfg.homogeneous_mass_lbs.is_none() {
        cfg.homogeneous_mass_lbs = Some(HOMOGENEOUS_MASS_LBS);
    }
    cfg.validate().map_err(|e| Failure::Config(e.into()))?;
    Ok(cfg)
}

fn cmd_run(args: &RunArgs) -> Result<bool, Failure> {
    let cfg = load_config(&args.common)?;
    let scenario = match &args.scenario {
        Some(p) => Scenario::load(p).map_err(|e| Failure::Config(e.into()))?,
        None => sample_scenario(&cfg, args.seed)?,
    };
    let kind = ControllerKind::from(args.controller);
    let outcome = run(&scenario, kind, &EngineParams::from_config(&cfg))?;
    let row = harness::metrics_row(0, scenario.seed, &scenario, &outcome);
    harness::write_single(&args.out, &scenario, &outcome, &row)?;
    let tt = row.travel_time.map_or("-".to_string(), |t| format!("{t:.2}"));
    println!(
        "{kind}: pake {:.2} be {:.2} tel {:.2} Wh/km, travel time {tt} s, avg velocity {:.2} m/s, h0_min {:.3}, completed {}",
        row.pake, row.be, row.tel, row.avg_velocity, row.h0_min, row.completed
    );
    Ok(outcome.collision)
}

fn cmd_batch(args: &BatchArgs) -> Result<bool, Failure> {
    let mut cfg = load_config(&args.common)?;
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    if let Some(r) = args.runs {
        cfg.runs = r;
    }
    if let Some(p) = args.parallelism {
        cfg.parallelism = p;
    }
    cfg.validate().map_err(|e| Failure::Config(e.into()))?;
    log::info!("running {} paired runs from seed {}", cfg.runs, cfg.base_seed);
    let report = harness::run_batch(&cfg)?;
    harness::write_batch(&args.out, &cfg, &report)?;
    print!("{}", harness::comparison_table(&report));
    Ok(report.collisions.ccbf + report.collisions.fifo > 0)
}

fn cmd_compare(out: &Path) -> Result<bool, Failure> {
    let summary = Summary::load(out)?;
    print!("{}", harness::comparison_table(&summary.report));
    Ok(summary.report.collisions.ccbf + summary.report.collisions.fifo > 0)
}

fn cmd_export(args: &ExportArgs) -> Result<bool, Failure> {
    let cfg = load_config(&args.common)?;
    let scenario = sample_scenario(&cfg, args.seed)?;
    harness::write_atomic(&args.out, scenario.to_json()?.as_bytes())?;
    Ok(false)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Batch(a) => cmd_batch(a),
        Command::Compare { out } => cmd_compare(out),
        Command::ExportScenario(a) => cmd_export(a),
    };
    match res {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("error: collision detected");
            ExitCode::from(EXIT_COLLISION)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
