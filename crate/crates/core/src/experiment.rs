//! Seeded Monte Carlo batches over the benchmark worlds.
//!
//! A batch runs `trials` independent missions of one algorithm at one
//! noise level and tallies outcomes by the corridor each successful run
//! used, one aggregate row per (algorithm, alpha). Every trial gets its own
//! seed stream derived from (master seed, scenario, algorithm, alpha,
//! trial), so trials are reproducible one at a time, in any order, and in
//! parallel. Output writers embed the resolved configuration and the
//! geometry hash, and never serialize wall-clock times, so reruns of the
//! same configuration produce byte-identical files.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{
    mission_cost, run_mission, run_rrt_only, CorrectionMode, CostWeights, MissionOutcome,
    MissionParams,
};
use crate::error::{invalid, Error, Result};
use crate::rng::SeedStream;
use crate::rrt::{DistanceMetric, PlannerParams};
use crate::sde::StateTimePoint;
use crate::worlds::{car_dynamics, Corridor, Environment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Rrt,
    // Documents always render "pi_rrt"; configs may use any CLI spelling.
    #[serde(alias = "pirrt", alias = "pi-rrt")]
    PiRrt,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Rrt => "rrt",
            Algorithm::PiRrt => "pi_rrt",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rrt" => Ok(Algorithm::Rrt),
            "pirrt" | "pi_rrt" | "pi-rrt" => Ok(Algorithm::PiRrt),
            other => Err(invalid!("unknown algorithm '{other}' (have: rrt, pirrt)")),
        }
    }
}

/// Every tunable of a trial, echoed verbatim into output files. Fields
/// default to the benchmark values so a config file only names what it
/// changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamOverrides {
    pub speed: f64,
    pub turn_scale: f64,
    pub start: [f64; 3],
    pub start_time: f64,
    pub t_final: f64,
    pub dt: f64,
    pub execute_steps: usize,
    pub bundle_size: usize,
    pub correction_iterations: usize,
    pub correction_mode: CorrectionMode,
    pub control_limit: Option<f64>,
    pub plan_once: bool,
    pub max_iterations: usize,
    pub steer_samples: usize,
    pub steer_horizon: usize,
    pub sample_attempts: usize,
    pub heading_weight: f64,
    pub time_weight: f64,
    pub terminal_position_weight: f64,
    pub wall_timeout_secs: Option<f64>,
}

impl Default for ParamOverrides {
    fn default() -> Self {
        let mission = MissionParams::default();
        let planner = PlannerParams::default();
        let metric = DistanceMetric::default();
        ParamOverrides {
            speed: 2.0,
            turn_scale: 1.0,
            start: [-9.0, 0.0, 0.0],
            start_time: 0.0,
            t_final: mission.t_final,
            dt: planner.dt,
            execute_steps: mission.execute_steps,
            bundle_size: mission.bundle_size,
            correction_iterations: mission.correction_iterations,
            correction_mode: mission.correction_mode,
            control_limit: mission.control_limit,
            plan_once: mission.plan_once,
            max_iterations: planner.max_iterations,
            steer_samples: planner.steer_samples,
            steer_horizon: planner.steer_horizon,
            sample_attempts: planner.sample_attempts,
            heading_weight: metric.heading_weight,
            time_weight: metric.time_weight,
            terminal_position_weight: CostWeights::default().terminal_position,
            wall_timeout_secs: Some(60.0),
        }
    }
}

impl ParamOverrides {
    pub fn mission_params(&self) -> MissionParams {
        MissionParams {
            t_final: self.t_final,
            execute_steps: self.execute_steps,
            bundle_size: self.bundle_size,
            correction_iterations: self.correction_iterations,
            correction_mode: self.correction_mode,
            control_limit: self.control_limit,
            planner: PlannerParams {
                max_iterations: self.max_iterations,
                steer_samples: self.steer_samples,
                steer_horizon: self.steer_horizon,
                sample_attempts: self.sample_attempts,
                metric: DistanceMetric {
                    heading_weight: self.heading_weight,
                    time_weight: self.time_weight,
                },
                dt: self.dt,
            },
            plan_once: self.plan_once,
            record_bundles: false,
            wall_timeout: self
                .wall_timeout_secs
                .map(std::time::Duration::from_secs_f64),
        }
    }

    pub fn cost_weights(&self) -> CostWeights {
        CostWeights { terminal_position: self.terminal_position_weight }
    }
}

/// One batch: `trials` missions of `algorithm` at noise level `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Preset name, or a label for the world in `environment_file`.
    pub scenario: String,
    /// Optional path to a world description; presets are used when absent.
    #[serde(default)]
    pub environment_file: Option<String>,
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub trials: usize,
    pub master_seed: u64,
    /// Share the random streams between algorithms (drop the algorithm
    /// from the seed derivation) so comparisons reuse the same draws.
    #[serde(default)]
    pub paired_streams: bool,
    #[serde(default)]
    pub overrides: ParamOverrides,
}

impl ExperimentConfig {
    pub fn new(scenario: &str, algorithm: Algorithm, alpha: f64, trials: usize, seed: u64) -> Self {
        ExperimentConfig {
            scenario: scenario.to_string(),
            environment_file: None,
            algorithm,
            alpha,
            trials,
            master_seed: seed,
            paired_streams: false,
            overrides: ParamOverrides::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid!("trials must be at least 1"));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(invalid!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        Ok(())
    }

    /// Loads the configured world: the named preset, or the TOML file when
    /// one is given.
    pub fn environment(&self) -> Result<Environment> {
        match &self.environment_file {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                Environment::from_toml_str(&text)
            }
            None => Environment::preset(&self.scenario),
        }
    }
}

/// Seed stream of one trial, derived from (master seed, scenario,
/// algorithm, alpha, trial). Paired mode drops the algorithm link so both
/// algorithms replay the same draws.
pub fn trial_stream(config: &ExperimentConfig, trial: usize) -> SeedStream {
    let mut stream = SeedStream::new(config.master_seed).child(&config.scenario, 0);
    if !config.paired_streams {
        stream = stream.child(config.algorithm.label(), 0);
    }
    stream.child("alpha", config.alpha.to_bits()).child("trial", trial as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub outcome: MissionOutcome,
    pub corridor: Option<Corridor>,
    pub terminal_cost: f64,
    pub cycles: usize,
    /// Measured, never serialized: identical reruns must produce identical
    /// documents.
    #[serde(skip, default)]
    pub wall_time_secs: f64,
}

/// Table-row tally of one batch. Successes split by corridor (plus a
/// bucket for worlds without a crossing line); failures split by kind.
/// The eight count columns always sum to `trials`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub trials: usize,
    pub bottom_corner: usize,
    pub bottom_slit: usize,
    pub top_slit: usize,
    pub top_corner: usize,
    pub success_no_crossing: usize,
    pub collisions: usize,
    pub goal_misses: usize,
    pub timeouts: usize,
}

impl AggregateRow {
    pub fn successes(&self) -> usize {
        self.bottom_corner
            + self.bottom_slit
            + self.top_slit
            + self.top_corner
            + self.success_no_crossing
    }

    pub fn failures(&self) -> usize {
        self.collisions + self.goal_misses + self.timeouts
    }

    pub fn slit_successes(&self) -> usize {
        self.bottom_slit + self.top_slit
    }

    fn tally(config: &ExperimentConfig, trials: &[TrialSummary]) -> AggregateRow {
        let mut row = AggregateRow {
            algorithm: config.algorithm,
            alpha: config.alpha,
            trials: trials.len(),
            bottom_corner: 0,
            bottom_slit: 0,
            top_slit: 0,
            top_corner: 0,
            success_no_crossing: 0,
            collisions: 0,
            goal_misses: 0,
            timeouts: 0,
        };
        for t in trials {
            match t.outcome {
                MissionOutcome::Success => match t.corridor {
                    Some(Corridor::BottomCorner) => row.bottom_corner += 1,
                    Some(Corridor::BottomSlit) => row.bottom_slit += 1,
                    Some(Corridor::TopSlit) => row.top_slit += 1,
                    Some(Corridor::TopCorner) => row.top_corner += 1,
                    None => row.success_no_crossing += 1,
                },
                MissionOutcome::Collision => row.collisions += 1,
                MissionOutcome::GoalMiss => row.goal_misses += 1,
                MissionOutcome::Timeout => row.timeouts += 1,
            }
        }
        row
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub environment_name: String,
    pub environment_sha256: String,
    pub trials: Vec<TrialSummary>,
    pub aggregate: AggregateRow,
}

/// Runs one batch. Trials run in parallel; the per-trial seed streams make
/// the result identical to a sequential run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let env = config.environment()?;
    let model = car_dynamics(config.overrides.speed, config.overrides.turn_scale, config.alpha)?;
    let params = config.overrides.mission_params();
    let cost = mission_cost(&env, config.overrides.cost_weights());
    let start =
        StateTimePoint::new(config.overrides.start.to_vec(), config.overrides.start_time);
    let trials: Vec<TrialSummary> = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let stream = trial_stream(config, i);
            let mission = match config.algorithm {
                Algorithm::PiRrt => run_mission(&model, &env, &cost, &start, &params, &stream)?,
                Algorithm::Rrt => run_rrt_only(&model, &env, &cost, &start, &params, &stream)?,
            };
            Ok(TrialSummary {
                trial: i,
                outcome: mission.outcome,
                corridor: mission.corridor,
                terminal_cost: mission.terminal_cost,
                cycles: mission.cycles.len(),
                wall_time_secs: mission.wall_time.as_secs_f64(),
            })
        })
        .collect::<Result<_>>()?;
    let aggregate = AggregateRow::tally(config, &trials);
    Ok(ExperimentResult {
        config: config.clone(),
        environment_name: env.name.clone(),
        environment_sha256: env.content_hash()?,
        trials,
        aggregate,
    })
}

/// Runs a list of batches in order and returns their results together.
pub fn sweep(configs: &[ExperimentConfig]) -> Result<Vec<ExperimentResult>> {
    if configs.is_empty() {
        return Err(invalid!("sweep needs at least one configuration"));
    }
    configs.iter().map(run_experiment).collect()
}

/// File form of a sweep: the cross product of algorithms and noise levels
/// over one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub scenario: String,
    #[serde(default)]
    pub environment_file: Option<String>,
    pub algorithms: Vec<Algorithm>,
    pub alphas: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub paired_streams: bool,
    #[serde(default)]
    pub overrides: ParamOverrides,
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: SweepConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if config.algorithms.is_empty() || config.alphas.is_empty() {
            return Err(invalid!("sweep needs at least one algorithm and one alpha"));
        }
        Ok(config)
    }

    /// Expands to one batch per (algorithm, alpha), algorithms outermost.
    pub fn expand(&self) -> Vec<ExperimentConfig> {
        let mut configs = Vec::with_capacity(self.algorithms.len() * self.alphas.len());
        for &algorithm in &self.algorithms {
            for &alpha in &self.alphas {
                configs.push(ExperimentConfig {
                    scenario: self.scenario.clone(),
                    environment_file: self.environment_file.clone(),
                    algorithm,
                    alpha,
                    trials: self.trials,
                    master_seed: self.master_seed,
                    paired_streams: self.paired_streams,
                    overrides: self.overrides.clone(),
                });
            }
        }
        configs
    }
}

fn config_json(config: &ExperimentConfig) -> Result<String> {
    serde_json::to_string(config).map_err(|e| Error::Config(e.to_string()))
}

/// Per-trial CSV with the resolved config and geometry hash in comment
/// lines, one data row per trial.
pub fn write_trials_csv(result: &ExperimentResult, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "# config: {}", config_json(&result.config)?)?;
    writeln!(out, "# environment_sha256: {}", result.environment_sha256)?;
    writeln!(out, "trial,outcome,corridor,terminal_cost,cycles")?;
    for t in &result.trials {
        writeln!(
            out,
            "{},{},{},{},{}",
            t.trial,
            t.outcome,
            t.corridor.map(|c| c.label()).unwrap_or(""),
            t.terminal_cost,
            t.cycles
        )?;
    }
    Ok(())
}

/// Combined aggregate CSV, one row per batch, configs echoed in comments.
pub fn write_aggregate_csv(results: &[ExperimentResult], out: &mut dyn Write) -> Result<()> {
    for (i, r) in results.iter().enumerate() {
        writeln!(
            out,
            "# row {i}: environment_sha256={} config={}",
            r.environment_sha256,
            config_json(&r.config)?
        )?;
    }
    writeln!(
        out,
        "algorithm,alpha,trials,bottom_corner,bottom_slit,top_slit,top_corner,\
         success_no_crossing,collisions,goal_misses,timeouts,successes,failures"
    )?;
    for r in results {
        let a = &r.aggregate;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            a.algorithm,
            a.alpha,
            a.trials,
            a.bottom_corner,
            a.bottom_slit,
            a.top_slit,
            a.top_corner,
            a.success_no_crossing,
            a.collisions,
            a.goal_misses,
            a.timeouts,
            a.successes(),
            a.failures()
        )?;
    }
    Ok(())
}

/// Aggregates as a JSON document (configs, hashes, and rows; no trials).
pub fn write_aggregates_json(results: &[ExperimentResult], out: &mut dyn Write) -> Result<()> {
    #[derive(Serialize)]
    struct Entry<'a> {
        config: &'a ExperimentConfig,
        environment_name: &'a str,
        environment_sha256: &'a str,
        aggregate: &'a AggregateRow,
    }
    let entries: Vec<Entry> = results
        .iter()
        .map(|r| Entry {
            config: &r.config,
            environment_name: &r.environment_name,
            environment_sha256: &r.environment_sha256,
            aggregate: &r.aggregate,
        })
        .collect();
    let text =
        serde_json::to_string_pretty(&entries).map_err(|e| Error::Config(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config(algorithm: Algorithm, trials: usize) -> ExperimentConfig {
        let mut config = ExperimentConfig::new("open", algorithm, 0.25, trials, 11);
        config.overrides.t_final = 2.0;
        config.overrides.max_iterations = 200;
        config.overrides.bundle_size = 10;
        config
    }

    #[test]
    fn aggregate_counts_partition_the_trials() {
        let config = quick_config(Algorithm::PiRrt, 4);
        let result = run_experiment(&config).unwrap();
        assert_eq!(result.trials.len(), 4);
        let a = &result.aggregate;
        assert_eq!(a.successes() + a.failures(), a.trials);
        assert_eq!(a.trials, 4);
    }

    #[test]
    fn trials_are_a_prefix_stable_sequence() {
        let short = run_experiment(&quick_config(Algorithm::Rrt, 2)).unwrap();
        let long = run_experiment(&quick_config(Algorithm::Rrt, 4)).unwrap();
        // Compare the serialized form: wall time is measured, not replayed.
        assert_eq!(
            serde_json::to_string(&short.trials).unwrap(),
            serde_json::to_string(&long.trials[..2]).unwrap()
        );
    }

    #[test]
    fn paired_streams_share_draws_across_algorithms() {
        let mut rrt = quick_config(Algorithm::Rrt, 1);
        let mut pirrt = quick_config(Algorithm::PiRrt, 1);
        assert_ne!(trial_stream(&rrt, 0).tag(), trial_stream(&pirrt, 0).tag());
        rrt.paired_streams = true;
        pirrt.paired_streams = true;
        assert_eq!(trial_stream(&rrt, 0).tag(), trial_stream(&pirrt, 0).tag());
        assert_ne!(trial_stream(&rrt, 0).tag(), trial_stream(&rrt, 1).tag());
    }

    #[test]
    fn unknown_scenario_is_an_error() {
        let config = ExperimentConfig::new("mystery", Algorithm::Rrt, 0.25, 1, 1);
        assert!(run_experiment(&config).is_err());
    }

    #[test]
    fn single_config_sweep_equals_run_experiment() {
        let config = quick_config(Algorithm::Rrt, 2);
        let alone = run_experiment(&config).unwrap();
        let swept = sweep(std::slice::from_ref(&config)).unwrap();
        assert_eq!(swept.len(), 1);
        assert_eq!(
            serde_json::to_string(&swept[0]).unwrap(),
            serde_json::to_string(&alone).unwrap()
        );
    }

    #[test]
    fn sweep_config_expands_the_cross_product() {
        let text = r#"
            scenario = "double_slit"
            algorithms = ["rrt", "pi_rrt"]
            alphas = [0.25, 0.5, 1.0]
            trials = 100
            master_seed = 2024

            [overrides]
            bundle_size = 50
        "#;
        let config = SweepConfig::from_toml_str(text).unwrap();
        let expanded = config.expand();
        assert_eq!(expanded.len(), 6);
        assert!(expanded.iter().all(|c| c.trials == 100 && c.overrides.bundle_size == 50));
        assert_eq!(expanded[0].algorithm, Algorithm::Rrt);
        assert_eq!(expanded[3].algorithm, Algorithm::PiRrt);
        assert_eq!(expanded[0].overrides.speed, 2.0);
    }

    #[test]
    fn config_accepts_every_cli_algorithm_spelling() {
        for spelling in ["pi_rrt", "pirrt", "pi-rrt"] {
            let text = format!(
                "scenario = \"open\"\nalgorithms = [\"{spelling}\"]\n\
                 alphas = [0.25]\ntrials = 1\nmaster_seed = 0\n"
            );
            let config = SweepConfig::from_toml_str(&text).unwrap();
            assert_eq!(config.algorithms, vec![Algorithm::PiRrt], "{spelling}");
        }
        // Output documents stay on the canonical name regardless of input.
        assert_eq!(serde_json::to_string(&Algorithm::PiRrt).unwrap(), "\"pi_rrt\"");
    }

    #[test]
    fn writers_echo_config_and_hash() {
        let result = run_experiment(&quick_config(Algorithm::Rrt, 2)).unwrap();
        let mut buf = Vec::new();
        write_trials_csv(&result, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# config: {"));
        assert!(text.contains(&result.environment_sha256));
        assert!(text.contains("trial,outcome,corridor,terminal_cost,cycles"));
        assert_eq!(text.lines().count(), 2 + 1 + result.trials.len());

        let mut buf = Vec::new();
        write_aggregate_csv(std::slice::from_ref(&result), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("algorithm,alpha"));
        assert!(text.contains("rrt,0.25,2,"));

        let mut buf = Vec::new();
        write_aggregates_json(std::slice::from_ref(&result), &mut buf).unwrap();
        let parsed: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(parsed[0]["aggregate"]["trials"], 2);
        assert!(parsed[0]["trials"].is_null());
    }

    #[test]
    fn rerun_is_byte_identical() {
        let config = quick_config(Algorithm::PiRrt, 2);
        let mut first = Vec::new();
        write_trials_csv(&run_experiment(&config).unwrap(), &mut first).unwrap();
        let mut second = Vec::new();
        write_trials_csv(&run_experiment(&config).unwrap(), &mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn algorithm_parses_common_spellings() {
        assert_eq!("rrt".parse::<Algorithm>().unwrap(), Algorithm::Rrt);
        assert_eq!("pirrt".parse::<Algorithm>().unwrap(), Algorithm::PiRrt);
        assert_eq!("pi-rrt".parse::<Algorithm>().unwrap(), Algorithm::PiRrt);
        assert!("dijkstra".parse::<Algorithm>().is_err());
    }
}
