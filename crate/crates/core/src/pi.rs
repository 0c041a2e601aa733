//! Path costs, desirability weighting, and the free-energy estimator.
//!
//! For a rollout generated under controls `u` with increments `dw`, the
//! corrected path cost is
//!
//! ```text
//! S = J + 1/2 sum_i u_i' u_i dt + a sum_i u_i' dw_i,      a = 1/sqrt(|rho|)
//! ```
//!
//! where `J` is the state cost (terminal plus running). The last two terms
//! are the change-of-measure correction for sampling under a forced policy;
//! they vanish for unforced rollouts. Desirability weights are the softmax
//! of `-|rho| S` over a batch, computed with a max shift so that huge
//! `|rho| S` products cannot overflow. An infeasible rollout carries
//! `S = +inf` and therefore weight exactly zero.
//!
//! The free-energy estimator is the dual side of the same construction:
//! `xi = -(1/|rho|) log mean(exp(-|rho| S))`, reported with a delta-method
//! standard error. For any admissible policy the expected total cost
//! `E[J + 1/2 int u'u]` is bounded below by `xi`; [`duality_gap`] packages
//! that comparison.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sde::{ControlSchedule, NoiseProfile, Trajectory};

type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type RunningFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
type CollisionFn = Arc<dyn Fn(&Trajectory) -> bool + Send + Sync>;

/// State cost `J = terminal(x_K) + sum_i running(x_i, t_i) dt`, with an
/// optional feasibility predicate that replaces the state cost by `+inf`.
#[derive(Clone)]
pub struct CostFunctional {
    terminal: TerminalFn,
    running: RunningFn,
    collision: Option<CollisionFn>,
}

impl CostFunctional {
    pub fn new(terminal: TerminalFn, running: RunningFn) -> Self {
        CostFunctional { terminal, running, collision: None }
    }

    /// Terminal-only cost; the running term is identically zero.
    pub fn terminal_only(terminal: TerminalFn) -> Self {
        CostFunctional::new(terminal, Arc::new(|_, _| 0.0))
    }

    pub fn with_collision_check(mut self, check: CollisionFn) -> Self {
        self.collision = Some(check);
        self
    }

    pub fn terminal_cost(&self, x: &[f64]) -> f64 {
        (self.terminal)(x)
    }

    pub fn running_cost(&self, x: &[f64], t: f64) -> f64 {
        (self.running)(x, t)
    }

    pub fn trajectory_infeasible(&self, traj: &Trajectory) -> bool {
        self.collision.as_ref().map(|c| c(traj)).unwrap_or(false)
    }
}

impl std::fmt::Debug for CostFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CostFunctional")
            .field("has_collision_check", &self.collision.is_some())
            .finish()
    }
}

/// The three terms of the corrected path cost, with `total` equal to their
/// sum evaluated in field order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathCostBreakdown {
    pub state_cost: f64,
    pub control_quadratic: f64,
    pub noise_cross: f64,
    pub total: f64,
}

/// `1/sqrt(|rho|)`; zero for the noiseless limit `|rho| = inf`.
fn inv_sqrt_rho(rho_magnitude: f64) -> f64 {
    1.0 / rho_magnitude.sqrt()
}

fn check_rho(rho_magnitude: f64) -> Result<()> {
    if rho_magnitude.is_nan() || rho_magnitude <= 0.0 {
        return Err(invalid!("|rho| must be positive, got {rho_magnitude}"));
    }
    Ok(())
}

/// Corrected path cost of one rollout, using left-endpoint quadrature for
/// the running term.
pub fn path_cost(traj: &Trajectory, cost: &CostFunctional, rho_magnitude: f64) -> Result<PathCostBreakdown> {
    check_rho(rho_magnitude)?;
    let dt = traj.dt();
    let a = inv_sqrt_rho(rho_magnitude);
    let k = traj.steps();
    let points = traj.points();

    let state_cost = if cost.trajectory_infeasible(traj) {
        f64::INFINITY
    } else {
        let mut running = 0.0;
        for p in points.iter().take(k) {
            running += cost.running_cost(&p.state, p.time) * dt;
        }
        cost.terminal_cost(&points[k].state) + running
    };

    let mut quad = 0.0;
    let mut cross = 0.0;
    for i in 0..k {
        let u = traj.controls().row(i);
        let dw = traj.noise().row(i);
        let mut uu = 0.0;
        let mut udw = 0.0;
        for j in 0..u.len() {
            uu += u[j] * u[j];
            udw += u[j] * dw[j];
        }
        quad += 0.5 * uu * dt;
        cross += a * udw;
    }

    Ok(PathCostBreakdown {
        state_cost,
        control_quadratic: quad,
        noise_cross: cross,
        total: state_cost + quad + cross,
    })
}

/// Path cost plus the cost-to-go sequence `S_i = cost of the suffix from
/// step i`, used for per-step correction weights. `cost_to_go[0]` agrees
/// with `breakdown.total` up to summation order.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCostProfile {
    pub breakdown: PathCostBreakdown,
    pub cost_to_go: Vec<f64>,
}

pub fn path_cost_profile(
    traj: &Trajectory,
    cost: &CostFunctional,
    rho_magnitude: f64,
) -> Result<PathCostProfile> {
    check_rho(rho_magnitude)?;
    let breakdown = path_cost(traj, cost, rho_magnitude)?;
    let k = traj.steps();
    let mut cost_to_go = vec![0.0; k];
    if breakdown.state_cost.is_infinite() {
        // An infeasible rollout gets zero weight at every step.
        cost_to_go.fill(f64::INFINITY);
        return Ok(PathCostProfile { breakdown, cost_to_go });
    }
    let dt = traj.dt();
    let a = inv_sqrt_rho(rho_magnitude);
    let points = traj.points();
    let mut suffix = cost.terminal_cost(&points[k].state);
    for i in (0..k).rev() {
        let u = traj.controls().row(i);
        let dw = traj.noise().row(i);
        let mut uu = 0.0;
        let mut udw = 0.0;
        for j in 0..u.len() {
            uu += u[j] * u[j];
            udw += u[j] * dw[j];
        }
        suffix += cost.running_cost(&points[i].state, points[i].time) * dt
            + 0.5 * uu * dt
            + a * udw;
        cost_to_go[i] = suffix;
    }
    Ok(PathCostProfile { breakdown, cost_to_go })
}

/// Normalized desirability weights for a batch of path costs.
///
/// `log_costs[k] = |rho| (S_k - min S)` is the shifted exponent actually
/// used, and `normalization` is the partition sum after the shift, so the
/// stabilized computation is visible to callers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesirabilityWeights {
    pub weights: Vec<f64>,
    pub log_costs: Vec<f64>,
    pub normalization: f64,
}

pub fn desirability_weights(path_costs: &[f64], rho_magnitude: f64) -> Result<DesirabilityWeights> {
    check_rho(rho_magnitude)?;
    if path_costs.is_empty() {
        return Err(invalid!("weight batch is empty"));
    }
    if path_costs.iter().any(|s| s.is_nan()) {
        return Err(invalid!("path costs contain NaN"));
    }
    let s_min = path_costs.iter().cloned().fold(f64::INFINITY, f64::min);
    if s_min.is_infinite() {
        return Err(Error::NoViableSample(format!(
            "all {} path costs are infinite",
            path_costs.len()
        )));
    }
    let mut log_costs = Vec::with_capacity(path_costs.len());
    let mut unnormalized = Vec::with_capacity(path_costs.len());
    for &s in path_costs {
        // The shifted exponent is 0 at the minimum even when |rho| = inf,
        // where the raw product would be inf * 0.
        let d = if s == s_min { 0.0 } else { rho_magnitude * (s - s_min) };
        log_costs.push(d);
        unnormalized.push((-d).exp());
    }
    let normalization: f64 = unnormalized.iter().sum();
    let weights = unnormalized.iter().map(|e| e / normalization).collect();
    Ok(DesirabilityWeights { weights, log_costs, normalization })
}

/// Weighted average of the batch increments, rescaled to a control:
/// `du_i = (1/sqrt(|rho|)) (1/dt) sum_k w_k dw_i(k)` with one fixed weight
/// per rollout.
pub fn control_correction(
    weights: &DesirabilityWeights,
    noises: &[NoiseProfile],
    rho_magnitude: f64,
) -> Result<ControlSchedule> {
    check_rho(rho_magnitude)?;
    let steps = noises.first().map(|n| n.steps()).unwrap_or(0);
    let per_step: Vec<&[f64]> = std::iter::repeat(weights.weights.as_slice()).take(steps).collect();
    weighted_noise_average(&per_step, noises, rho_magnitude, weights.weights.len())
}

/// Same recombination with weights recomputed per step from each rollout's
/// cost-to-go, so later steps stop paying for costs already sunk.
pub fn control_correction_cost_to_go(
    profiles: &[PathCostProfile],
    noises: &[NoiseProfile],
    rho_magnitude: f64,
) -> Result<ControlSchedule> {
    check_rho(rho_magnitude)?;
    if profiles.len() != noises.len() {
        return Err(invalid!("{} profiles but {} noise batches", profiles.len(), noises.len()));
    }
    let steps = noises.first().map(|n| n.steps()).unwrap_or(0);
    let mut step_weights = Vec::with_capacity(steps);
    for i in 0..steps {
        let column: Vec<f64> = profiles
            .iter()
            .map(|p| {
                if p.cost_to_go.len() != steps {
                    f64::NAN
                } else {
                    p.cost_to_go[i]
                }
            })
            .collect();
        step_weights.push(desirability_weights(&column, rho_magnitude)?.weights);
    }
    let borrowed: Vec<&[f64]> = step_weights.iter().map(|w| w.as_slice()).collect();
    weighted_noise_average(&borrowed, noises, rho_magnitude, profiles.len())
}

fn weighted_noise_average(
    weights_per_step: &[&[f64]],
    noises: &[NoiseProfile],
    rho_magnitude: f64,
    batch: usize,
) -> Result<ControlSchedule> {
    if noises.len() != batch {
        return Err(invalid!("{} weights but {} noise profiles", batch, noises.len()));
    }
    if noises.is_empty() {
        return Err(invalid!("correction needs at least one rollout"));
    }
    let steps = noises[0].steps();
    let channels = noises[0].channels();
    let dt = noises[0].dt();
    if noises.iter().any(|n| n.steps() != steps || n.channels() != channels || n.dt() != dt) {
        return Err(invalid!("noise profiles disagree on the grid"));
    }
    let gain = inv_sqrt_rho(rho_magnitude) / dt;
    let mut rows = Vec::with_capacity(steps);
    for i in 0..steps {
        let w = weights_per_step[i];
        let mut row = vec![0.0; channels];
        for (k, noise) in noises.iter().enumerate() {
            let dw = noise.row(i);
            for j in 0..channels {
                row[j] += w[k] * dw[j];
            }
        }
        for v in &mut row {
            *v *= gain;
        }
        rows.push(row);
    }
    ControlSchedule::from_rows(rows, channels, dt)
}

/// Per-channel admissible control box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ControlBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(invalid!("bounds must pair one lower with one upper per channel"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(invalid!("each lower bound must not exceed its upper bound"));
        }
        Ok(ControlBounds { lower, upper })
    }

    pub fn symmetric(channels: usize, limit: f64) -> Result<Self> {
        if !(limit.is_finite() && limit >= 0.0) {
            return Err(invalid!("symmetric limit must be finite and >= 0"));
        }
        ControlBounds::new(vec![-limit; channels], vec![limit; channels])
    }

    pub fn channels(&self) -> usize {
        self.lower.len()
    }

    pub fn clamp(&self, j: usize, v: f64) -> f64 {
        v.max(self.lower[j]).min(self.upper[j])
    }
}

/// `clamp(baseline + correction)` per step and channel.
pub fn compose_policy(
    baseline: &ControlSchedule,
    correction: &ControlSchedule,
    bounds: &ControlBounds,
) -> Result<ControlSchedule> {
    if baseline.steps() != correction.steps()
        || baseline.channels() != correction.channels()
        || baseline.dt() != correction.dt()
    {
        return Err(invalid!("baseline and correction must share the grid"));
    }
    if bounds.channels() != baseline.channels() {
        return Err(invalid!("bounds have wrong channel count"));
    }
    let rows = (0..baseline.steps())
        .map(|i| {
            (0..baseline.channels())
                .map(|j| bounds.clamp(j, baseline.row(i)[j] + correction.row(i)[j]))
                .collect()
        })
        .collect();
    ControlSchedule::from_rows(rows, baseline.channels(), baseline.dt())
}

/// Monte Carlo free-energy estimate with a delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

pub fn free_energy_estimate(path_costs: &[f64], rho_magnitude: f64) -> Result<FreeEnergyEstimate> {
    check_rho(rho_magnitude)?;
    if path_costs.is_empty() {
        return Err(invalid!("free energy needs at least one sample"));
    }
    if path_costs.iter().any(|s| s.is_nan()) {
        return Err(invalid!("path costs contain NaN"));
    }
    let n = path_costs.len();
    let s_min = path_costs.iter().cloned().fold(f64::INFINITY, f64::min);
    if s_min.is_infinite() {
        return Err(Error::NoViableSample(format!("all {n} path costs are infinite")));
    }
    if rho_magnitude.is_infinite() {
        // Zero-temperature limit: the estimator degenerates to the minimum.
        return Ok(FreeEnergyEstimate { value: s_min, std_error: 0.0, samples: n });
    }
    // Shifted summands y_k = exp(-|rho| (S_k - S_min)) in (0, 1].
    let ys: Vec<f64> = path_costs
        .iter()
        .map(|&s| if s == s_min { 1.0 } else { (-rho_magnitude * (s - s_min)).exp() })
        .collect();
    let mean: f64 = ys.iter().sum::<f64>() / n as f64;
    let value = s_min + (-mean.ln()) / rho_magnitude;
    let std_error = if n > 1 {
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        // Delta method through xi = S_min - log(mean)/|rho|.
        (var / n as f64).sqrt() / (mean * rho_magnitude)
    } else {
        0.0
    };
    Ok(FreeEnergyEstimate { value, std_error, samples: n })
}

/// Comparison of a policy's achieved mean cost against the free-energy
/// lower bound. `violated` flags a gap more than three standard errors
/// below zero, which under a correct implementation should not happen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityGap {
    pub gap: f64,
    pub violated: bool,
}

pub fn duality_gap(free_energy: f64, controlled_cost_mean: f64, controlled_cost_se: f64) -> DualityGap {
    let gap = controlled_cost_mean - free_energy;
    DualityGap { gap, violated: gap < -3.0 * controlled_cost_se }
}

/// Sample mean and standard error of the mean.
pub fn mean_and_standard_error(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(invalid!("empty sample"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
