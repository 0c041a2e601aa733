//! Python bindings for the path-integral control toolkit.
//!
//! The module mirrors the core crate's main entry points: desirability
//! weights and free-energy estimation, the state-time planner, the
//! receding-horizon controller, the Monte Carlo harness, and the duality
//! self-check. Results are flattened into plain Python-friendly records at
//! construction so no Rust state leaks across the boundary.

use std::str::FromStr;

use pirrt_core as core;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(err: core::Error) -> PyErr {
    match err {
        core::Error::Io { .. } => PyIOError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn parse_algorithm(label: &str) -> PyResult<core::Algorithm> {
    core::Algorithm::from_str(label).map_err(to_py)
}

fn flatten_trajectory(traj: &core::Trajectory) -> Vec<(f64, f64, f64, f64)> {
    traj.points()
        .iter()
        .map(|p| (p.time, p.state[0], p.state[1], p.state[2]))
        .collect()
}

fn scalar_controls(schedule: &core::ControlSchedule) -> Vec<f64> {
    (0..schedule.steps()).map(|i| schedule.row(i)[0]).collect()
}

/// A benchmark world: workspace, obstacle blocks, goal disc, corridors.
#[pyclass(module = "pirrt")]
#[derive(Clone)]
struct Environment {
    inner: core::Environment,
}

#[pymethods]
impl Environment {
    /// Load a shipped preset: "single_slit", "double_slit", or "open".
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        core::Environment::preset(name).map(|inner| Environment { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        core::Environment::from_toml_str(text).map(|inner| Environment { inner }).map_err(to_py)
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml_string().map_err(to_py)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    fn content_hash(&self) -> PyResult<String> {
        self.inner.content_hash().map_err(to_py)
    }

    fn point_free(&self, x: f64, y: f64) -> bool {
        self.inner.point_free(x, y)
    }

    fn obstacles(&self) -> Vec<(f64, f64, f64, f64)> {
        self.inner.obstacles.iter().map(|r| (r.x_min, r.x_max, r.y_min, r.y_max)).collect()
    }

    #[getter]
    fn goal_center(&self) -> (f64, f64) {
        (self.inner.goal.center[0], self.inner.goal.center[1])
    }

    #[getter]
    fn goal_radius(&self) -> f64 {
        self.inner.goal.radius
    }

    #[getter]
    fn goal_time_window(&self) -> (f64, f64) {
        self.inner.goal.time_window.into()
    }

    fn __repr__(&self) -> String {
        format!(
            "Environment(name={:?}, obstacles={}, corridors={})",
            self.inner.name,
            self.inner.obstacles.len(),
            self.inner.corridors.len()
        )
    }
}

/// Result of one planner invocation.
#[pyclass(module = "pirrt")]
struct Plan {
    #[pyo3(get)]
    reached_goal: bool,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    vertex_count: usize,
    branch: Vec<(f64, f64, f64, f64)>,
    controls: Vec<f64>,
}

#[pymethods]
impl Plan {
    /// Branch waypoints as (t, x, y, theta) tuples.
    fn branch(&self) -> Vec<(f64, f64, f64, f64)> {
        self.branch.clone()
    }

    /// Noise-equivalent feedforward along the branch, one value per step.
    fn controls(&self) -> Vec<f64> {
        self.controls.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Plan(reached_goal={}, iterations={}, vertices={}, steps={})",
            self.reached_goal,
            self.iterations,
            self.vertex_count,
            self.controls.len()
        )
    }
}

/// Outcome of one receding-horizon run.
#[pyclass(module = "pirrt")]
struct Mission {
    #[pyo3(get)]
    outcome: String,
    #[pyo3(get)]
    corridor: Option<String>,
    #[pyo3(get)]
    terminal_cost: f64,
    #[pyo3(get)]
    cycle_count: usize,
    executed: Vec<(f64, f64, f64, f64)>,
    controls: Vec<f64>,
}

#[pymethods]
impl Mission {
    #[getter]
    fn success(&self) -> bool {
        self.outcome == "success"
    }

    /// Executed trajectory as (t, x, y, theta) tuples.
    fn executed(&self) -> Vec<(f64, f64, f64, f64)> {
        self.executed.clone()
    }

    /// Executed controls, one value per step, clamped to the admissible box.
    fn controls(&self) -> Vec<f64> {
        self.controls.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Mission(outcome={:?}, corridor={:?}, terminal_cost={:.4}, cycles={})",
            self.outcome, self.corridor, self.terminal_cost, self.cycle_count
        )
    }
}

impl Mission {
    fn from_core(result: &core::MissionResult) -> Self {
        Mission {
            outcome: result.outcome.label().to_string(),
            corridor: result.corridor.map(|c| c.to_string()),
            terminal_cost: result.terminal_cost,
            cycle_count: result.cycles.len(),
            executed: flatten_trajectory(&result.executed),
            controls: scalar_controls(result.executed.controls()),
        }
    }
}

/// Aggregated seeded Monte Carlo batch for one (algorithm, alpha) pair.
#[pyclass(module = "pirrt")]
struct Experiment {
    #[pyo3(get)]
    algorithm: String,
    #[pyo3(get)]
    alpha: f64,
    #[pyo3(get)]
    trials: usize,
    #[pyo3(get)]
    successes: usize,
    #[pyo3(get)]
    failures: usize,
    #[pyo3(get)]
    collisions: usize,
    #[pyo3(get)]
    goal_misses: usize,
    #[pyo3(get)]
    timeouts: usize,
    #[pyo3(get)]
    environment_sha256: String,
    corridor_counts: Vec<(&'static str, usize)>,
    trial_rows: Vec<(usize, String, Option<String>, f64, usize)>,
}

#[pymethods]
impl Experiment {
    /// Successful-trial counts keyed by crossing corridor.
    fn corridors<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let dict = PyDict::new_bound(py);
        for (label, count) in &self.corridor_counts {
            dict.set_item(label, count)?;
        }
        Ok(dict)
    }

    /// Per-trial records as (trial, outcome, corridor, terminal_cost, cycles).
    fn trial_records(&self) -> Vec<(usize, String, Option<String>, f64, usize)> {
        self.trial_rows.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Experiment(algorithm={:?}, alpha={}, trials={}, successes={}, failures={})",
            self.algorithm, self.alpha, self.trials, self.successes, self.failures
        )
    }
}

/// Free-energy duality self-check on the 1-D integrator benchmark.
#[pyclass(module = "pirrt")]
struct DualityCheck {
    #[pyo3(get)]
    free_energy: f64,
    #[pyo3(get)]
    std_error: f64,
    #[pyo3(get)]
    quadrature: f64,
    #[pyo3(get)]
    relative_error: f64,
    #[pyo3(get)]
    passed: bool,
    policy_rows: Vec<(f64, f64, f64, f64, bool)>,
}

#[pymethods]
impl DualityCheck {
    /// Rows of (control, mean_cost, std_error, gap, violated).
    fn policies(&self) -> Vec<(f64, f64, f64, f64, bool)> {
        self.policy_rows.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "DualityCheck(free_energy={:.6}, quadrature={:.6}, passed={})",
            self.free_energy, self.quadrature, self.passed
        )
    }
}

/// Normalized desirability weights exp(-|rho| S_k) / sum over the batch.
#[pyfunction]
fn desirability_weights(path_costs: Vec<f64>, rho_magnitude: f64) -> PyResult<Vec<f64>> {
    core::desirability_weights(&path_costs, rho_magnitude).map(|w| w.weights).map_err(to_py)
}

/// Monte Carlo free energy of a cost sample: (value, standard_error).
#[pyfunction]
fn free_energy(path_costs: Vec<f64>, rho_magnitude: f64) -> PyResult<(f64, f64)> {
    core::free_energy_estimate(&path_costs, rho_magnitude)
        .map(|e| (e.value, e.std_error))
        .map_err(to_py)
}

/// Run the state-time planner once and return the extracted branch.
#[pyfunction]
#[pyo3(signature = (env, alpha = 0.25, seed = 0, speed = 2.0, turn = 1.0,
                    start = (-9.0, 0.0, 0.0), start_time = 0.0, t_final = 10.0,
                    max_iterations = 6000))]
#[allow(clippy::too_many_arguments)]
fn plan(
    env: &Environment,
    alpha: f64,
    seed: u64,
    speed: f64,
    turn: f64,
    start: (f64, f64, f64),
    start_time: f64,
    t_final: f64,
    max_iterations: usize,
) -> PyResult<Plan> {
    let model = core::car_dynamics(speed, turn, alpha).map_err(to_py)?;
    let z = core::StateTimePoint::new(vec![start.0, start.1, start.2], start_time);
    let mut params = core::PlannerParams::default();
    params.max_iterations = max_iterations;
    let stream = core::SeedStream::new(seed);
    let result = core::plan(&model, &env.inner, &z, t_final, &params, &stream).map_err(to_py)?;
    Ok(Plan {
        reached_goal: result.reached_goal,
        iterations: result.iterations_used,
        vertex_count: result.tree.len(),
        branch: flatten_trajectory(&result.branch.trajectory),
        controls: scalar_controls(&result.branch.controls()),
    })
}

/// Run one receding-horizon mission; `algorithm` is "pi_rrt" or "rrt".
#[pyfunction]
#[pyo3(signature = (env, algorithm = "pi_rrt", alpha = 0.25, seed = 0, speed = 2.0,
                    turn = 1.0, start = (-9.0, 0.0, 0.0), t_final = 10.0,
                    execute_steps = None, bundle_size = None, terminal_weight = None))]
#[allow(clippy::too_many_arguments)]
fn run_mission(
    env: &Environment,
    algorithm: &str,
    alpha: f64,
    seed: u64,
    speed: f64,
    turn: f64,
    start: (f64, f64, f64),
    t_final: f64,
    execute_steps: Option<usize>,
    bundle_size: Option<usize>,
    terminal_weight: Option<f64>,
) -> PyResult<Mission> {
    let algorithm = parse_algorithm(algorithm)?;
    let model = core::car_dynamics(speed, turn, alpha).map_err(to_py)?;
    let z = core::StateTimePoint::new(vec![start.0, start.1, start.2], 0.0);
    let mut params = core::MissionParams::default();
    params.t_final = t_final;
    if let Some(steps) = execute_steps {
        params.execute_steps = steps;
    }
    if let Some(size) = bundle_size {
        params.bundle_size = size;
    }
    let mut weights = core::CostWeights::default();
    if let Some(w) = terminal_weight {
        weights.terminal_position = w;
    }
    let cost = core::mission_cost(&env.inner, weights);
    let stream = core::SeedStream::new(seed);
    let result = match algorithm {
        core::Algorithm::PiRrt => {
            core::run_mission(&model, &env.inner, &cost, &z, &params, &stream)
        }
        core::Algorithm::Rrt => {
            core::run_rrt_only(&model, &env.inner, &cost, &z, &params, &stream)
        }
    }
    .map_err(to_py)?;
    Ok(Mission::from_core(&result))
}

/// Run a seeded Monte Carlo batch on a preset scenario.
#[pyfunction]
#[pyo3(signature = (scenario = "double_slit", algorithm = "pi_rrt", alpha = 0.25,
                    trials = 10, master_seed = 0, paired = false))]
fn run_experiment(
    scenario: &str,
    algorithm: &str,
    alpha: f64,
    trials: usize,
    master_seed: u64,
    paired: bool,
) -> PyResult<Experiment> {
    let algorithm = parse_algorithm(algorithm)?;
    let mut config = core::ExperimentConfig::new(scenario, algorithm, alpha, trials, master_seed);
    config.paired_streams = paired;
    let result = core::run_experiment(&config).map_err(to_py)?;
    let agg = &result.aggregate;
    Ok(Experiment {
        algorithm: algorithm.label().to_string(),
        alpha: agg.alpha,
        trials: agg.trials,
        successes: agg.successes(),
        failures: agg.failures(),
        collisions: agg.collisions,
        goal_misses: agg.goal_misses,
        timeouts: agg.timeouts,
        environment_sha256: result.environment_sha256.clone(),
        corridor_counts: vec![
            ("bottom_corner", agg.bottom_corner),
            ("bottom_slit", agg.bottom_slit),
            ("top_slit", agg.top_slit),
            ("top_corner", agg.top_corner),
        ],
        trial_rows: result
            .trials
            .iter()
            .map(|t| {
                (
                    t.trial,
                    t.outcome.label().to_string(),
                    t.corridor.map(|c| c.to_string()),
                    t.terminal_cost,
                    t.cycles,
                )
            })
            .collect(),
    })
}

/// Verify the free-energy bound on the 1-D benchmark with constant policies.
#[pyfunction]
#[pyo3(signature = (samples = 20_000, rho_magnitude = 4.0, seed = 0))]
fn check_duality(samples: usize, rho_magnitude: f64, seed: u64) -> PyResult<DualityCheck> {
    let mut params = core::DualityCheckParams::default();
    params.samples = samples;
    params.rho_magnitude = rho_magnitude;
    let stream = core::SeedStream::new(seed);
    let report = core::run_duality_check(&params, &stream).map_err(to_py)?;
    Ok(DualityCheck {
        free_energy: report.free_energy.value,
        std_error: report.free_energy.std_error,
        quadrature: report.quadrature,
        relative_error: report.relative_error,
        passed: report.passed,
        policy_rows: report
            .policies
            .iter()
            .map(|p| (p.control, p.mean_cost, p.std_error, p.gap.gap, p.gap.violated))
            .collect(),
    })
}

#[pymodule]
fn pirrt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Environment>()?;
    m.add_class::<Plan>()?;
    m.add_class::<Mission>()?;
    m.add_class::<Experiment>()?;
    m.add_class::<DualityCheck>()?;
    m.add_function(wrap_pyfunction!(desirability_weights, m)?)?;
    m.add_function(wrap_pyfunction!(free_energy, m)?)?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(run_mission, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(check_duality, m)?)?;
    Ok(())
}
