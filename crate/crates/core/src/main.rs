use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rlmcf::config::ExperimentConfig;
use rlmcf::experiment::generate_scenario;
use rlmcf::report;
use rlmcf::rng::{derive_seed, stream, substream};
use rlmcf::{selftest, Error, Result};

#[derive(Parser)]
#[command(name = "rlmcf", version, about = "Track-before-detect particle filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Experiment config (TOML). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write truth and frames.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the Monte Carlo batch for the configured filters.
    Run {
        #[command(flatten)]
        common: Common,
        /// Number of Monte Carlo runs, overriding `scenario.n_runs`.
        #[arg(long)]
        runs: Option<usize>,
        /// Run only the named filters (repeatable or comma separated).
        #[arg(long, value_delimiter = ',')]
        filter: Vec<String>,
    },
    /// Run the oracle checks and report measured errors.
    Selftest,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_TOTAL: u8 = 3;

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.scenario.master_seed = seed;
    }
    Ok(cfg)
}

fn simulate(common: &Common) -> Result<ExitCode> {
    let cfg = load(common)?;
    let sensor = cfg.sensor_model()?;
    let motion = cfg.motion_model()?;
    let (n_range, n_bearing) = sensor.grid_shape();
    println!("grid: {n_range} x {n_bearing} cells ({} total)", sensor.n_cells());
    println!("amplitude: {}", sensor.amplitude());

    let master = cfg.scenario.master_seed;
    let seed = derive_seed(master, &[0, stream::SCENARIO]);
    let mut rng = substream(master, &[0, stream::SCENARIO]);
    let scenario = generate_scenario(&cfg.scenario, motion.dt, &sensor, seed, &mut rng)?;

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir.join("frames"))?;
    let mut traj = String::from("step,x,vx,y,vy\n");
    for (k, s) in scenario.trajectory.iter().enumerate() {
        traj.push_str(&format!("{k},{},{},{},{}\n", s[0], s[1], s[2], s[3]));
    }
    fs::write(dir.join("trajectory.csv"), traj)?;
    for (k, z) in scenario.measurements.iter().enumerate() {
        let file = fs::File::create(dir.join("frames").join(format!("frame_{:03}.csv", k + 1)))?;
        sensor.write_frame_csv(z, std::io::BufWriter::new(file))?;
    }
    fs::write(dir.join("scenario.json"), scenario.to_json()?)?;
    fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    println!("frames: {}", scenario.n_steps());
    println!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn run(common: &Common, runs: Option<usize>, filters: &[String]) -> Result<ExitCode> {
    let mut cfg = load(common)?;
    if let Some(n) = runs {
        cfg.scenario.n_runs = n;
    }
    if !filters.is_empty() {
        cfg.retain_filters(filters)?;
    }
    cfg.validate()?;
    let experiment = cfg.experiment()?;
    let labels: Vec<String> = experiment.filters.iter().map(|f| f.label.clone()).collect();
    let (results, metrics) = experiment.run_batch(cfg.scenario.n_runs, cfg.scenario.master_seed)?;
    write_outputs(&cfg.output_dir, &cfg, &labels, &results, &metrics)?;

    print!("{}", report::summary_table(&metrics, 5));
    let failed: usize = metrics.filters.iter().map(|f| f.failed_runs).sum();
    let attempted = metrics.n_runs * metrics.filters.len();
    if failed > 0 {
        eprintln!("{failed} of {attempted} filter runs failed; see runs/*/failures.txt");
    }
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else if failed == attempted {
        ExitCode::from(EXIT_TOTAL)
    } else {
        ExitCode::from(EXIT_PARTIAL)
    })
}

fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    labels: &[String],
    results: &[rlmcf::experiment::RunResult],
    metrics: &rlmcf::experiment::BatchMetrics,
) -> Result<()> {
    report::write_batch(dir, labels, results, metrics)?;
    fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    Ok(())
}

fn run_selftest() -> Result<ExitCode> {
    let reports = selftest::run_all()?;
    for r in &reports {
        println!("{r}");
    }
    Ok(if reports.iter().all(|r| r.passed) { ExitCode::SUCCESS } else { ExitCode::from(EXIT_TOTAL) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { common } => simulate(common),
        Command::Run { common, runs, filter } => run(common, *runs, filter),
        Command::Selftest => run_selftest(),
    };
    match result {
        Ok(code) => code,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_TOTAL)
        }
    }
}
