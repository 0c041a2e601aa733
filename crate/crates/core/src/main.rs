//! Command-line front end: plan and render one mission, run seeded
//! Monte Carlo batches, sweep a config file, or verify the free-energy
//! bound on the 1-D integrator.
//!
//! Exit codes: 0 on success, 1 on a usage error, 2 on a runtime error,
//! 3 when a verification check ran and failed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pirrt_core::controller::{mission_cost, run_mission, run_rrt_only};
use pirrt_core::duality::{run_duality_check, DualityCheckParams};
use pirrt_core::experiment::{
    run_experiment, sweep, trial_stream, write_aggregate_csv, write_aggregates_json,
    write_trials_csv, Algorithm, ExperimentConfig, ExperimentResult, SweepConfig,
};
use pirrt_core::plot::mission_figure;
use pirrt_core::rng::SeedStream;
use pirrt_core::rrt::plan;
use pirrt_core::sde::{StateTimePoint, Trajectory};
use pirrt_core::worlds::car_dynamics;
use pirrt_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "pirrt",
    version,
    about = "Sampling-based planning with path-integral control corrections"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seeded mission and write its record, figures, and tree dumps
    Plan(PlanArgs),
    /// Run a seeded batch of missions and print the outcome table
    Montecarlo(MonteCarloArgs),
    /// Run every (algorithm, alpha) batch of a sweep config file
    Sweep(SweepArgs),
    /// Verify the free-energy lower bound on the 1-D integrator
    CheckDuality(CheckDualityArgs),
}

#[derive(Args)]
struct WorldArgs {
    /// Environment preset: single_slit, double_slit, or open
    #[arg(long, default_value = "single_slit")]
    scenario: String,
    /// TOML world file used instead of the preset
    #[arg(long)]
    environment_file: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    world: WorldArgs,
    /// Noise intensity in the control channel
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    /// Master seed; `plan` shows trial 0 of a `montecarlo` run seeded alike
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "pirrt")]
    algorithm: Algorithm,
    /// Output directory for mission.json, mission.svg, executed.csv, and
    /// the cycle-0 tree CSVs
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct MonteCarloArgs {
    #[command(flatten)]
    world: WorldArgs,
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value = "pirrt")]
    algorithm: Algorithm,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reuse the same noise streams for both algorithms
    #[arg(long)]
    paired: bool,
    /// When set, also write trials.csv and aggregate.json here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep description: scenario, algorithms, alphas, trials,
    /// master_seed, and an optional [overrides] table whose keys default
    /// to the benchmark values (see `montecarlo --help` and the README)
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CheckDualityArgs {
    /// Monte Carlo sample count per estimate
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Inverse temperature |rho|
    #[arg(long, default_value_t = 4.0)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code =
                if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                    0
                } else {
                    1
                };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Plan(args) => run_plan(args),
        Command::Montecarlo(args) => run_montecarlo(args),
        Command::Sweep(args) => run_sweep(args),
        Command::CheckDuality(args) => run_check_duality(args),
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, bytes)?;
    Ok(path)
}

fn write_polyline_csv(traj: &Trajectory) -> Vec<u8> {
    let mut buf = Vec::new();
    let _ = writeln!(buf, "t,x,y,theta");
    for p in traj.points() {
        let _ = writeln!(buf, "{},{},{},{}", p.time, p.state[0], p.state[1], p.state[2]);
    }
    buf
}

fn base_config(world: &WorldArgs, algorithm: Algorithm, alpha: f64, trials: usize, seed: u64) -> ExperimentConfig {
    let mut config = ExperimentConfig::new(&world.scenario, algorithm, alpha, trials, seed);
    config.environment_file =
        world.environment_file.as_ref().map(|p| p.to_string_lossy().into_owned());
    config
}

fn run_plan(args: PlanArgs) -> Result<ExitCode> {
    let config = base_config(&args.world, args.algorithm, args.alpha, 1, args.seed);
    let env = config.environment()?;
    let model =
        car_dynamics(config.overrides.speed, config.overrides.turn_scale, config.alpha)?;
    let cost = mission_cost(&env, config.overrides.cost_weights());
    let mut params = config.overrides.mission_params();
    params.record_bundles = true;
    let start =
        StateTimePoint::new(config.overrides.start.to_vec(), config.overrides.start_time);
    let stream = trial_stream(&config, 0);
    let mut mission = match config.algorithm {
        Algorithm::PiRrt => run_mission(&model, &env, &cost, &start, &params, &stream)?,
        Algorithm::Rrt => run_rrt_only(&model, &env, &cost, &start, &params, &stream)?,
    };
    // The first cycle's tree, replayed from the same stream it used.
    let first_plan =
        plan(&model, &env, &start, params.t_final, &params.planner, &stream.child("plan", 0))?;

    fs::create_dir_all(&args.out)?;
    let svg = mission_figure(&env, &mission, Some(&first_plan.tree));
    write_file(&args.out, "mission.svg", svg.as_bytes())?;
    write_file(&args.out, "executed.csv", &write_polyline_csv(&mission.executed))?;
    let mut vertices = Vec::new();
    first_plan.tree.write_vertices_csv(&mut vertices)?;
    write_file(&args.out, "tree_vertices.csv", &vertices)?;
    let mut edges = Vec::new();
    first_plan.tree.write_edges_csv(&mut edges)?;
    write_file(&args.out, "tree_edges.csv", &edges)?;
    // Bundles stay in the figure only; the JSON record would balloon.
    for cycle in &mut mission.cycles {
        cycle.bundle = None;
    }
    let json = serde_json::to_string_pretty(&mission).map_err(|e| Error::Config(e.to_string()))?;
    write_file(&args.out, "mission.json", json.as_bytes())?;

    println!(
        "{} on {}: {} after {} cycles, corridor {}, terminal cost {:.4}",
        config.algorithm,
        env.name,
        mission.outcome,
        mission.cycles.len(),
        mission.corridor.map(|c| c.label()).unwrap_or("none"),
        mission.terminal_cost
    );
    println!("wrote mission.json, mission.svg, executed.csv, tree_*.csv to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn print_aggregates(results: &[ExperimentResult]) -> Result<()> {
    let mut table = Vec::new();
    write_aggregate_csv(results, &mut table)?;
    let text = String::from_utf8(table).expect("writers emit utf-8");
    for line in text.lines().filter(|l| !l.starts_with('#')) {
        println!("{line}");
    }
    Ok(())
}

fn run_montecarlo(args: MonteCarloArgs) -> Result<ExitCode> {
    let mut config = base_config(&args.world, args.algorithm, args.alpha, args.trials, args.seed);
    config.paired_streams = args.paired;
    let result = run_experiment(&config)?;
    print_aggregates(std::slice::from_ref(&result))?;
    println!(
        "{} of {} trials reached the goal ({} collisions, {} goal misses, {} timeouts)",
        result.aggregate.successes(),
        result.aggregate.trials,
        result.aggregate.collisions,
        result.aggregate.goal_misses,
        result.aggregate.timeouts
    );
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        let mut trials = Vec::new();
        write_trials_csv(&result, &mut trials)?;
        write_file(out, "trials.csv", &trials)?;
        let mut agg = Vec::new();
        write_aggregates_json(std::slice::from_ref(&result), &mut agg)?;
        write_file(out, "aggregate.json", &agg)?;
        println!("wrote trials.csv and aggregate.json to {}", out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn run_sweep(args: SweepArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.config)?;
    let sweep_config = SweepConfig::from_toml_str(&text)?;
    let results = sweep(&sweep_config.expand())?;
    fs::create_dir_all(&args.out)?;
    let mut agg_csv = Vec::new();
    write_aggregate_csv(&results, &mut agg_csv)?;
    write_file(&args.out, "aggregate.csv", &agg_csv)?;
    let mut agg_json = Vec::new();
    write_aggregates_json(&results, &mut agg_json)?;
    write_file(&args.out, "aggregate.json", &agg_json)?;
    for result in &results {
        let name = format!(
            "trials_{}_alpha{}.csv",
            result.config.algorithm, result.config.alpha
        );
        let mut trials = Vec::new();
        write_trials_csv(result, &mut trials)?;
        write_file(&args.out, &name, &trials)?;
    }
    print_aggregates(&results)?;
    println!("wrote aggregate.csv, aggregate.json, and per-batch trial CSVs to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn run_check_duality(args: CheckDualityArgs) -> Result<ExitCode> {
    let mut params = DualityCheckParams::default();
    params.samples = args.samples;
    params.rho_magnitude = args.rho;
    let report = run_duality_check(&params, &SeedStream::new(args.seed))?;
    println!("{report}");
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(3) })
}
