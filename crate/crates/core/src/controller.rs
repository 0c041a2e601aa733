//! Receding-horizon missions: plan, tilt, execute, repeat.
//!
//! Each cycle plans a baseline branch with the tree planner, samples a
//! bundle of noisy rollouts around the baseline policy, tilts the policy by
//! the desirability-weighted noise average, clamps it to the admissible
//! box, and executes the first few steps under fresh execution noise. The
//! loop repeats from the realized state until the final time, a collision,
//! or the wall-clock budget. [`run_rrt_only`] runs the identical loop with
//! the tilt switched off, which is the comparison baseline.
//!
//! Randomness is budgeted per cycle through three child streams ("plan",
//! "bundle", "exec") so that skipping the bundle, as [`run_rrt_only`] does,
//! cannot shift the draws seen by planning or execution.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::pi::{
    compose_policy, control_correction, control_correction_cost_to_go, desirability_weights,
    path_cost_profile, ControlBounds, CostFunctional, PathCostProfile,
};
use crate::rng::SeedStream;
use crate::rrt::{plan, PlannerParams};
use crate::sde::{
    rollout, sample_noise, step_once, ControlSchedule, DynamicsModel, NoiseProfile,
    StateTimePoint, Trajectory,
};
use crate::worlds::{classify_crossing, Corridor, Environment};

/// How bundle weights enter the control correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMode {
    /// Reweight each step by the cost-to-go of every member's suffix.
    CostToGo,
    /// One weight per member from its whole-path cost, applied to all steps.
    WholePath,
}

/// Knobs for a receding-horizon mission.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MissionParams {
    /// Mission end time; the horizon is `[z_init.time, t_final]`.
    pub t_final: f64,
    /// Steps of the corrected policy executed per cycle before replanning.
    pub execute_steps: usize,
    /// Local rollouts sampled around the baseline per correction pass.
    /// Zero disables the correction even in [`run_mission`].
    pub bundle_size: usize,
    /// Correction passes per cycle; each pass re-samples around the policy
    /// composed so far.
    pub correction_iterations: usize,
    pub correction_mode: CorrectionMode,
    /// Symmetric admissible box `|u| <= limit` applied to every executed
    /// policy; `None` leaves controls unclamped.
    pub control_limit: Option<f64>,
    pub planner: PlannerParams,
    /// Plan the tree once at mission start and track the remaining suffix
    /// of that policy afterwards, instead of replanning every cycle.
    pub plan_once: bool,
    /// Keep the bundle trajectories in each cycle record (costs and weights
    /// are always kept). Off by default: 100 rollouts per cycle add up.
    pub record_bundles: bool,
    /// Wall-clock budget checked at cycle boundaries.
    pub wall_timeout: Option<Duration>,
}

impl Default for MissionParams {
    fn default() -> Self {
        MissionParams {
            t_final: 10.0,
            execute_steps: 5,
            bundle_size: 100,
            correction_iterations: 1,
            correction_mode: CorrectionMode::CostToGo,
            control_limit: Some(1.0),
            planner: PlannerParams::default(),
            plan_once: false,
            record_bundles: false,
            wall_timeout: Some(Duration::from_secs(60)),
        }
    }
}

impl MissionParams {
    fn validate(&self) -> Result<()> {
        if !self.t_final.is_finite() {
            return Err(invalid!("t_final must be finite"));
        }
        if self.execute_steps == 0 {
            return Err(invalid!("execute_steps must be at least 1"));
        }
        if self.correction_iterations == 0 {
            return Err(invalid!("correction_iterations must be at least 1"));
        }
        if let Some(limit) = self.control_limit {
            if !(limit.is_finite() && limit > 0.0) {
                return Err(invalid!("control_limit must be positive, got {limit}"));
            }
        }
        Ok(())
    }

    fn bounds(&self, channels: usize) -> ControlBounds {
        match self.control_limit {
            Some(limit) => ControlBounds::symmetric(channels, limit)
                .expect("validated finite positive limit"),
            None => ControlBounds::new(
                vec![f64::NEG_INFINITY; channels],
                vec![f64::INFINITY; channels],
            )
            .expect("infinite box is a valid box"),
        }
    }
}

/// Weights of the terminal state cost used by the benchmark missions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    /// Coefficient of `1/2 |pos - goal_center|^2` at the final point.
    pub terminal_position: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights { terminal_position: 4.0 }
    }
}

/// Quadratic goal-distance terminal cost plus infeasibility of any
/// trajectory that touches an obstacle or leaves the workspace.
pub fn mission_cost(env: &Environment, weights: CostWeights) -> CostFunctional {
    let center = env.goal.center;
    let w = weights.terminal_position;
    let checked = env.clone();
    CostFunctional::terminal_only(Arc::new(move |x: &[f64]| {
        let (dx, dy) = (x[0] - center[0], x[1] - center[1]);
        0.5 * w * (dx * dx + dy * dy)
    }))
    .with_collision_check(Arc::new(move |traj: &Trajectory| !checked.trajectory_free(traj)))
}

/// Everything one replan cycle saw and did.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplanCycleRecord {
    pub cycle_index: usize,
    /// Realized state the cycle planned from; equals `executed.start()`.
    pub start: StateTimePoint,
    /// Whether the planner's branch endpoint satisfied the goal set, or the
    /// branch is a best-effort fallback.
    pub plan_reached_goal: bool,
    /// Planner iterations spent this cycle (0 for tracked cycles under
    /// `plan_once`).
    pub planner_iterations: usize,
    /// Baseline branch trajectory the correction was sampled around.
    pub baseline: Trajectory,
    /// Effective bundle size (0 marks a correction-free cycle).
    pub bundle_size: usize,
    /// Whole-path cost of each bundle member in the last correction pass.
    /// Infeasible members carry `+inf`, rendered as `null` in JSON.
    #[serde(with = "cost_or_null")]
    pub bundle_costs: Vec<f64>,
    /// Whole-path desirability weights matching `bundle_costs`; a
    /// probability vector when non-empty.
    pub weights: Vec<f64>,
    /// Bundle trajectories of the last pass, kept when `record_bundles`.
    pub bundle: Option<Vec<Trajectory>>,
    /// True when every bundle member was infeasible twice in a row and the
    /// cycle fell back to the uncorrected baseline policy.
    pub fallback: bool,
    /// The policy the cycle would execute over the whole baseline horizon,
    /// after correction and clamping.
    pub policy: ControlSchedule,
    /// The steps actually executed under fresh noise this cycle.
    pub executed: Trajectory,
}

/// JSON has no infinities, so infeasible costs travel as `null`.
mod cost_or_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(costs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        costs
            .iter()
            .map(|&c| if c.is_finite() { Some(c) } else { None })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?
            .into_iter()
            .map(|c| c.unwrap_or(f64::INFINITY))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionOutcome {
    /// Final executed point lies in the goal set.
    Success,
    /// Execution touched an obstacle or left the workspace.
    Collision,
    /// Reached the final time outside the goal set.
    GoalMiss,
    /// Wall-clock budget exhausted at a cycle boundary.
    Timeout,
}

impl MissionOutcome {
    pub fn is_success(self) -> bool {
        matches!(self, MissionOutcome::Success)
    }

    pub fn label(self) -> &'static str {
        match self {
            MissionOutcome::Success => "success",
            MissionOutcome::Collision => "collision",
            MissionOutcome::GoalMiss => "goal_miss",
            MissionOutcome::Timeout => "timeout",
        }
    }
}

impl std::fmt::Display for MissionOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MissionResult {
    pub outcome: MissionOutcome,
    /// Corridor used at the first crossing of the obstacle line, when the
    /// world defines one and the mission got that far.
    pub corridor: Option<Corridor>,
    /// Terminal state cost at the final executed point.
    pub terminal_cost: f64,
    /// All executed segments concatenated; junction points are shared
    /// bit-for-bit.
    pub executed: Trajectory,
    pub cycles: Vec<ReplanCycleRecord>,
    /// Measured duration, excluded from serialized output so that reruns
    /// of the same seed produce identical documents.
    #[serde(skip, default)]
    pub wall_time: Duration,
}

/// Steps of size `dt` needed to cover `[t0, t1]`, tolerant of the last-ulp
/// drift that accumulating `t0 + i dt` piecewise produces.
fn steps_between(t0: f64, t1: f64, dt: f64) -> usize {
    if t1 <= t0 {
        return 0;
    }
    ((t1 - t0) / dt - 1e-9).ceil() as usize
}

/// Draws `count` rollouts from `start` under `controls` with fresh noise
/// from `stream.child(label, k)`. Members are evaluated in parallel; the
/// pre-assigned child streams keep the result independent of scheduling.
fn bundle_rollouts(
    model: &DynamicsModel,
    start: &StateTimePoint,
    controls: &ControlSchedule,
    count: usize,
    stream: &SeedStream,
    label: &str,
) -> Result<Vec<Trajectory>> {
    (0..count)
        .into_par_iter()
        .map(|k| {
            let noise = sample_noise(
                &stream.child(label, k as u64),
                controls.steps(),
                controls.channels(),
                controls.dt(),
            )?;
            rollout(model, &start.state, start.time, controls, &noise)
        })
        .collect()
}

/// Local trajectory bundle around a baseline policy: `count` rollouts from
/// `start` under `controls`, noise from `stream.child("sample", k)`.
pub fn sample_bundle(
    model: &DynamicsModel,
    start: &StateTimePoint,
    controls: &ControlSchedule,
    count: usize,
    stream: &SeedStream,
) -> Result<Vec<Trajectory>> {
    if count == 0 {
        return Err(invalid!("bundle needs at least one member"));
    }
    bundle_rollouts(model, start, controls, count, stream, "sample")
}

fn cost_profiles(
    bundle: &[Trajectory],
    cost: &CostFunctional,
    rho_magnitude: f64,
) -> Result<Vec<PathCostProfile>> {
    bundle.par_iter().map(|t| path_cost_profile(t, cost, rho_magnitude)).collect()
}

fn all_infeasible(profiles: &[PathCostProfile]) -> bool {
    profiles.iter().all(|p| p.breakdown.state_cost.is_infinite())
}

/// Runs the policy step by step, stopping at the first collision. On a
/// step whose endpoint is free but whose segment clips an obstacle, the
/// trajectory is cut at the entry point so the final point witnesses the
/// collision. Returns the executed trajectory and the collision flag.
fn execute_policy(
    model: &DynamicsModel,
    env: &Environment,
    start: &StateTimePoint,
    controls: &ControlSchedule,
    noise: &NoiseProfile,
) -> Result<(Trajectory, bool)> {
    let dt = controls.dt();
    let mut points = Vec::with_capacity(controls.steps() + 1);
    points.push(start.clone());
    let mut collided = false;
    let mut used = 0;
    for i in 0..controls.steps() {
        let prev = &points[i];
        let next = step_once(model, &prev.state, controls.row(i), noise.row(i), dt)?;
        let t_next = start.time + (i as f64 + 1.0) * dt;
        let a = (prev.state[0], prev.state[1]);
        let b = (next[0], next[1]);
        used += 1;
        if !env.point_free(b.0, b.1) {
            points.push(StateTimePoint::new(next, t_next));
            collided = true;
            break;
        }
        if let Some(entry) = env.first_obstacle_entry(a, b) {
            // Corner nick with a free endpoint: land on the boundary.
            let cut: Vec<f64> = prev
                .state
                .iter()
                .zip(&next)
                .map(|(p, n)| p + entry * (n - p))
                .collect();
            points.push(StateTimePoint::new(cut, prev.time + entry * dt));
            collided = true;
            break;
        }
        points.push(StateTimePoint::new(next, t_next));
    }
    let traj =
        Trajectory::from_parts(points, controls.truncated(used), noise.truncated(used))?;
    Ok((traj, collided))
}

/// Outcome of one cycle's plan-and-correct stage, before execution.
struct CyclePolicy {
    policy: ControlSchedule,
    bundle_costs: Vec<f64>,
    weights: Vec<f64>,
    bundle: Option<Vec<Trajectory>>,
    fallback: bool,
}

/// Samples bundles around `baseline`'s policy and composes the corrected,
/// clamped policy. `with_correction = false` (or an empty baseline, or
/// `bundle_size = 0`) reduces to clamping the baseline policy.
fn correct_policy(
    model: &DynamicsModel,
    cost: &CostFunctional,
    params: &MissionParams,
    bounds: &ControlBounds,
    baseline: &Trajectory,
    bundle_stream: &SeedStream,
    with_correction: bool,
    record_bundles: bool,
) -> Result<CyclePolicy> {
    let rho = model.rho_magnitude();
    let zero_correction = ControlSchedule::zeros(
        baseline.steps(),
        baseline.controls().channels(),
        baseline.dt(),
    )?;
    let mut out = CyclePolicy {
        policy: compose_policy(baseline.controls(), &zero_correction, bounds)?,
        bundle_costs: Vec::new(),
        weights: Vec::new(),
        bundle: None,
        fallback: false,
    };
    if !with_correction || params.bundle_size == 0 || baseline.steps() == 0 {
        return Ok(out);
    }
    for pass in 0..params.correction_iterations {
        let pass_stream = bundle_stream.child("iter", pass as u64);
        let mut bundle = bundle_rollouts(
            model,
            baseline.start(),
            &out.policy,
            params.bundle_size,
            &pass_stream,
            "sample",
        )?;
        let mut profiles = cost_profiles(&bundle, cost, rho)?;
        if all_infeasible(&profiles) {
            bundle = bundle_rollouts(
                model,
                baseline.start(),
                &out.policy,
                params.bundle_size,
                &pass_stream,
                "retry",
            )?;
            profiles = cost_profiles(&bundle, cost, rho)?;
        }
        if all_infeasible(&profiles) {
            eprintln!(
                "warning: every local sample was infeasible twice at t = {:.3}; \
                 executing the uncorrected baseline policy",
                baseline.start().time
            );
            out.policy = compose_policy(baseline.controls(), &zero_correction, bounds)?;
            out.bundle_costs.clear();
            out.weights.clear();
            out.bundle = None;
            out.fallback = true;
            return Ok(out);
        }
        let totals: Vec<f64> = profiles.iter().map(|p| p.breakdown.total).collect();
        let weights = desirability_weights(&totals, rho)?;
        let noises: Vec<NoiseProfile> = bundle.iter().map(|t| t.noise().clone()).collect();
        let delta = match params.correction_mode {
            CorrectionMode::CostToGo => control_correction_cost_to_go(&profiles, &noises, rho)?,
            CorrectionMode::WholePath => control_correction(&weights, &noises, rho)?,
        };
        out.policy = compose_policy(&out.policy, &delta, bounds)?;
        out.bundle_costs = totals;
        out.weights = weights.weights;
        out.bundle = record_bundles.then_some(bundle);
    }
    Ok(out)
}

/// One plan-correct-execute cycle from `current`. The mission loop calls
/// this with per-cycle child streams; standalone callers get cycle 0.
pub fn replan_cycle(
    model: &DynamicsModel,
    env: &Environment,
    cost: &CostFunctional,
    current: &StateTimePoint,
    params: &MissionParams,
    stream: &SeedStream,
) -> Result<ReplanCycleRecord> {
    params.validate()?;
    let steps_left = steps_between(current.time, params.t_final, params.planner.dt);
    if steps_left == 0 {
        return Err(invalid!("no steps remain before t_final = {}", params.t_final));
    }
    let bounds = params.bounds(model.control_dim());
    let (record, _) = cycle(
        model,
        env,
        cost,
        params,
        &bounds,
        current,
        steps_left,
        0,
        None,
        stream,
        true,
    )?;
    Ok(record)
}

/// Baseline for a cycle when `plan_once` is tracking a cached policy: the
/// unexecuted suffix re-simulated noise-free from the realized state.
fn tracked_baseline(
    model: &DynamicsModel,
    cached: &ControlSchedule,
    executed_steps: usize,
    current: &StateTimePoint,
) -> Result<Trajectory> {
    let skip = executed_steps.min(cached.steps());
    let rows: Vec<Vec<f64>> = cached.rows()[skip..].to_vec();
    let steps = rows.len();
    let controls = ControlSchedule::from_rows(rows, cached.channels(), cached.dt())?;
    let noise = NoiseProfile::zeros(steps, cached.channels(), cached.dt())?;
    rollout(model, &current.state, current.time, &controls, &noise)
}

#[allow(clippy::too_many_arguments)]
fn cycle(
    model: &DynamicsModel,
    env: &Environment,
    cost: &CostFunctional,
    params: &MissionParams,
    bounds: &ControlBounds,
    current: &StateTimePoint,
    steps_left: usize,
    cycle_index: usize,
    baseline_override: Option<(Trajectory, bool, usize)>,
    stream: &SeedStream,
    with_correction: bool,
) -> Result<(ReplanCycleRecord, bool)> {
    let dt = params.planner.dt;
    let channels = model.control_dim();
    let (baseline, plan_reached_goal, planner_iterations) = match baseline_override {
        Some(parts) => parts,
        None => {
            let plan_stream = stream.child("plan", cycle_index as u64);
            let result =
                plan(model, env, current, params.t_final, &params.planner, &plan_stream)?;
            (result.branch.trajectory, result.reached_goal, result.iterations_used)
        }
    };
    let corrected = correct_policy(
        model,
        cost,
        params,
        bounds,
        &baseline,
        &stream.child("bundle", cycle_index as u64),
        with_correction,
        params.record_bundles,
    )?;
    // A zero-length baseline still has to burn time: coast on zero control.
    let exec_count = if baseline.steps() == 0 {
        params.execute_steps.min(steps_left)
    } else {
        params.execute_steps.min(steps_left).min(baseline.steps())
    };
    let exec_controls = if corrected.policy.steps() >= exec_count {
        corrected.policy.truncated(exec_count)
    } else {
        ControlSchedule::zeros(exec_count, channels, dt)?
    };
    let exec_noise =
        sample_noise(&stream.child("exec", cycle_index as u64), exec_count, channels, dt)?;
    let (executed, collided) = execute_policy(model, env, current, &exec_controls, &exec_noise)?;
    let record = ReplanCycleRecord {
        cycle_index,
        start: current.clone(),
        plan_reached_goal,
        planner_iterations,
        baseline,
        bundle_size: if with_correction { params.bundle_size } else { 0 },
        bundle_costs: corrected.bundle_costs,
        weights: corrected.weights,
        bundle: corrected.bundle,
        fallback: corrected.fallback,
        policy: corrected.policy,
        executed,
    };
    Ok((record, collided))
}

fn drive(
    model: &DynamicsModel,
    env: &Environment,
    cost: &CostFunctional,
    z_init: &StateTimePoint,
    params: &MissionParams,
    stream: &SeedStream,
    with_correction: bool,
) -> Result<MissionResult> {
    params.validate()?;
    if z_init.state.len() != model.state_dim() {
        return Err(invalid!("initial state has wrong dimension"));
    }
    if !env.point_free(z_init.state[0], z_init.state[1]) {
        return Err(invalid!("initial state is in collision"));
    }
    let clock = Instant::now();
    let dt = params.planner.dt;
    let channels = model.control_dim();
    let bounds = params.bounds(channels);
    let total_steps = steps_between(z_init.time, params.t_final, dt);

    let mut points = vec![z_init.clone()];
    let mut controls = ControlSchedule::zeros(0, channels, dt)?;
    let mut noise = NoiseProfile::zeros(0, channels, dt)?;
    let mut cycles = Vec::new();
    let mut current = z_init.clone();
    let mut done = 0usize;
    let mut cycle_index = 0usize;
    let mut cached_plan: Option<(ControlSchedule, bool)> = None;
    let mut outcome = None;

    while done < total_steps {
        if let Some(budget) = params.wall_timeout {
            if clock.elapsed() > budget {
                outcome = Some(MissionOutcome::Timeout);
                break;
            }
        }
        let baseline_override = if params.plan_once {
            if cached_plan.is_none() {
                let plan_stream = stream.child("plan", cycle_index as u64);
                let result =
                    plan(model, env, &current, params.t_final, &params.planner, &plan_stream)?;
                let first = (
                    result.branch.trajectory.clone(),
                    result.reached_goal,
                    result.iterations_used,
                );
                cached_plan =
                    Some((result.branch.trajectory.controls().clone(), result.reached_goal));
                Some(first)
            } else {
                let (cached, reached) = cached_plan.as_ref().expect("cached above");
                Some((tracked_baseline(model, cached, done, &current)?, *reached, 0))
            }
        } else {
            None
        };
        let (record, collided) = cycle(
            model,
            env,
            cost,
            params,
            &bounds,
            &current,
            total_steps - done,
            cycle_index,
            baseline_override,
            stream,
            with_correction,
        )?;
        points.extend_from_slice(&record.executed.points()[1..]);
        controls.extend(record.executed.controls())?;
        noise.extend(record.executed.noise())?;
        done += record.executed.steps();
        current = record.executed.end().clone();
        cycles.push(record);
        cycle_index += 1;
        if collided {
            outcome = Some(MissionOutcome::Collision);
            break;
        }
    }

    let outcome = outcome.unwrap_or_else(|| {
        if env.goal.contains(&current) {
            MissionOutcome::Success
        } else {
            MissionOutcome::GoalMiss
        }
    });
    let executed = Trajectory::from_parts(points, controls, noise)?;
    Ok(MissionResult {
        outcome,
        corridor: classify_crossing(&executed, env),
        terminal_cost: cost.terminal_cost(&current.state),
        executed,
        cycles,
        wall_time: clock.elapsed(),
    })
}

/// Full receding-horizon mission with the path-integral correction.
pub fn run_mission(
    model: &DynamicsModel,
    env: &Environment,
    cost: &CostFunctional,
    z_init: &StateTimePoint,
    params: &MissionParams,
    stream: &SeedStream,
) -> Result<MissionResult> {
    drive(model, env, cost, z_init, params, stream, true)
}

/// The comparison baseline: the same loop with the correction switched off,
/// executing the clamped planner policy directly. `cost` is only used to
/// report the terminal cost; it never influences the controls.
pub fn run_rrt_only(
    model: &DynamicsModel,
    env: &Environment,
    cost: &CostFunctional,
    z_init: &StateTimePoint,
    params: &MissionParams,
    stream: &SeedStream,
) -> Result<MissionResult> {
    drive(model, env, cost, z_init, params, stream, false)
}
