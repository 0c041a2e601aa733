//! Discrete-time simulation of controlled diffusions.
//!
//! Dynamics are control-affine with state-independent noise scale:
//!
//! ```text
//! x_{i+1} = x_i + f(x_i) dt + B(x_i) (u_i dt + a dw_i),   dw_i ~ N(0, dt I)
//! ```
//!
//! where `a` is the noise scale. The inverse temperature of the matching
//! path-integral control problem is `|rho| = 1 / a^2`, so `a = 1/sqrt(|rho|)`
//! and the same increment `dw` that perturbs the state also enters the path
//! cost. Rollouts evaluate the update in a fixed order, so replaying a
//! recorded `(controls, noise)` pair through [`step_once`] reproduces the
//! stored points bit for bit.

use std::sync::Arc;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::SeedStream;

/// A state paired with the simulation time it was observed at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTimePoint {
    pub state: Vec<f64>,
    pub time: f64,
}

impl StateTimePoint {
    pub fn new(state: Vec<f64>, time: f64) -> Self {
        StateTimePoint { state, time }
    }
}

type StateFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Control-affine diffusion `dx = f(x) dt + B(x)(u dt + a dw)`.
///
/// `drift` writes `f(x)` (length `n`); `control_matrix` writes `B(x)` in
/// row-major order (length `n * m`). Both must be pure functions of the
/// state.
#[derive(Clone)]
pub struct DynamicsModel {
    state_dim: usize,
    control_dim: usize,
    noise_scale: f64,
    drift: StateFn,
    control_matrix: StateFn,
}

impl std::fmt::Debug for DynamicsModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DynamicsModel")
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("noise_scale", &self.noise_scale)
            .finish()
    }
}

impl DynamicsModel {
    pub fn new(
        state_dim: usize,
        control_dim: usize,
        noise_scale: f64,
        drift: StateFn,
        control_matrix: StateFn,
    ) -> Result<Self> {
        if state_dim == 0 || control_dim == 0 {
            return Err(invalid!("dynamics dimensions must be positive"));
        }
        if !noise_scale.is_finite() || noise_scale < 0.0 {
            return Err(invalid!("noise scale must be finite and >= 0, got {noise_scale}"));
        }
        Ok(DynamicsModel { state_dim, control_dim, noise_scale, drift, control_matrix })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    /// Noise scale `a`, equal to `1/sqrt(|rho|)`.
    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    /// Inverse temperature `|rho| = 1 / a^2`. Infinite for a noiseless model.
    pub fn rho_magnitude(&self) -> f64 {
        1.0 / (self.noise_scale * self.noise_scale)
    }

    /// Same vector fields at a different noise scale.
    pub fn with_noise_scale(&self, noise_scale: f64) -> Result<Self> {
        DynamicsModel::new(
            self.state_dim,
            self.control_dim,
            noise_scale,
            Arc::clone(&self.drift),
            Arc::clone(&self.control_matrix),
        )
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out);
    }

    pub fn control_matrix_into(&self, x: &[f64], out: &mut [f64]) {
        (self.control_matrix)(x, out);
    }
}

/// Piecewise-constant control signal on a uniform grid of width `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    dt: f64,
    channels: usize,
    rows: Vec<Vec<f64>>,
}

impl ControlSchedule {
    pub fn from_rows(rows: Vec<Vec<f64>>, channels: usize, dt: f64) -> Result<Self> {
        check_grid(dt, channels)?;
        for row in &rows {
            if row.len() != channels || row.iter().any(|v| !v.is_finite()) {
                return Err(invalid!("control rows must be finite with {channels} channels"));
            }
        }
        Ok(ControlSchedule { dt, channels, rows })
    }

    pub fn zeros(steps: usize, channels: usize, dt: f64) -> Result<Self> {
        check_grid(dt, channels)?;
        Ok(ControlSchedule { dt, channels, rows: vec![vec![0.0; channels]; steps] })
    }

    /// One constant row repeated for every step.
    pub fn constant(value: &[f64], steps: usize, dt: f64) -> Result<Self> {
        Self::from_rows(vec![value.to_vec(); steps], value.len(), dt)
    }

    pub fn steps(&self) -> usize {
        self.rows.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn truncated(&self, steps: usize) -> Self {
        let mut c = self.clone();
        c.rows.truncate(steps);
        c
    }

    /// Appends `other`, which must share the grid shape.
    pub fn extend(&mut self, other: &ControlSchedule) -> Result<()> {
        if other.channels != self.channels || other.dt != self.dt {
            return Err(invalid!("cannot concatenate schedules with different grids"));
        }
        self.rows.extend(other.rows.iter().cloned());
        Ok(())
    }
}

/// Realized Brownian increments on the same grid as a [`ControlSchedule`].
/// `seed_tag` records the stream that generated the draws (0 for synthetic
/// profiles such as [`NoiseProfile::zeros`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    dt: f64,
    channels: usize,
    rows: Vec<Vec<f64>>,
    seed_tag: u64,
}

impl NoiseProfile {
    pub fn from_rows(rows: Vec<Vec<f64>>, channels: usize, dt: f64, seed_tag: u64) -> Result<Self> {
        check_grid(dt, channels)?;
        for row in &rows {
            if row.len() != channels || row.iter().any(|v| !v.is_finite()) {
                return Err(invalid!("noise rows must be finite with {channels} channels"));
            }
        }
        Ok(NoiseProfile { dt, channels, rows, seed_tag })
    }

    pub fn zeros(steps: usize, channels: usize, dt: f64) -> Result<Self> {
        check_grid(dt, channels)?;
        Ok(NoiseProfile { dt, channels, rows: vec![vec![0.0; channels]; steps], seed_tag: 0 })
    }

    pub fn steps(&self) -> usize {
        self.rows.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn seed_tag(&self) -> u64 {
        self.seed_tag
    }

    pub fn truncated(&self, steps: usize) -> Self {
        let mut n = self.clone();
        n.rows.truncate(steps);
        n
    }

    pub fn extend(&mut self, other: &NoiseProfile) -> Result<()> {
        if other.channels != self.channels || other.dt != self.dt {
            return Err(invalid!("cannot concatenate noise with different grids"));
        }
        self.rows.extend(other.rows.iter().cloned());
        Ok(())
    }
}

fn check_grid(dt: f64, channels: usize) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid!("dt must be finite and positive, got {dt}"));
    }
    if channels == 0 {
        return Err(invalid!("channel count must be positive"));
    }
    Ok(())
}

/// Draws `steps` iid increments `dw ~ N(0, dt I)` from the given stream.
pub fn sample_noise(
    stream: &SeedStream,
    steps: usize,
    channels: usize,
    dt: f64,
) -> Result<NoiseProfile> {
    check_grid(dt, channels)?;
    let normal = Normal::new(0.0, dt.sqrt()).map_err(|e| invalid!("bad noise spec: {e}"))?;
    let mut rng = stream.rng();
    let rows = (0..steps)
        .map(|_| (0..channels).map(|_| normal.sample(&mut rng)).collect())
        .collect();
    Ok(NoiseProfile { dt, channels, rows, seed_tag: stream.tag() })
}

/// One Euler-Maruyama update: `x + f(x) dt + B(x) (u dt + a dw)`.
///
/// The sum over control channels runs in index order; every rollout in this
/// crate goes through this function, which is what makes replay exact.
pub fn step_once(model: &DynamicsModel, x: &[f64], u: &[f64], dw: &[f64], dt: f64) -> Result<Vec<f64>> {
    let (n, m) = (model.state_dim(), model.control_dim());
    if x.len() != n || u.len() != m || dw.len() != m {
        return Err(invalid!(
            "dimension mismatch: state {} (want {n}), control {} / noise {} (want {m})",
            x.len(),
            u.len(),
            dw.len()
        ));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid!("dt must be finite and positive, got {dt}"));
    }
    let mut f = vec![0.0; n];
    let mut b = vec![0.0; n * m];
    model.drift_into(x, &mut f);
    model.control_matrix_into(x, &mut b);
    let a = model.noise_scale();
    let mut next = vec![0.0; n];
    for i in 0..n {
        let mut acc = x[i] + f[i] * dt;
        for j in 0..m {
            acc += b[i * m + j] * (u[j] * dt + a * dw[j]);
        }
        next[i] = acc;
    }
    Ok(next)
}

/// A simulated path: `steps + 1` points plus the controls and increments
/// that produced it. Points sit on the uniform grid `t_0 + i dt`, except
/// that an execution cut short by a collision may end mid-step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    points: Vec<StateTimePoint>,
    controls: ControlSchedule,
    noise: NoiseProfile,
}

impl Trajectory {
    /// Assembles a trajectory from parts already known to be consistent
    /// (same grid, `points.len() == steps + 1`). Used when concatenating
    /// executed segments; fresh simulation should go through [`rollout`].
    pub fn from_parts(
        points: Vec<StateTimePoint>,
        controls: ControlSchedule,
        noise: NoiseProfile,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid!("trajectory needs at least one point"));
        }
        if points.len() != controls.steps() + 1 || controls.steps() != noise.steps() {
            return Err(invalid!(
                "length mismatch: {} points, {} controls, {} noise rows",
                points.len(),
                controls.steps(),
                noise.steps()
            ));
        }
        if controls.dt() != noise.dt() || controls.channels() != noise.channels() {
            return Err(invalid!("controls and noise must share the grid"));
        }
        Ok(Trajectory { points, controls, noise })
    }

    /// A zero-step trajectory anchored at `point`.
    pub fn single_point(point: StateTimePoint, channels: usize, dt: f64) -> Result<Self> {
        Trajectory::from_parts(
            vec![point],
            ControlSchedule::zeros(0, channels, dt)?,
            NoiseProfile::zeros(0, channels, dt)?,
        )
    }

    pub fn points(&self) -> &[StateTimePoint] {
        &self.points
    }

    pub fn controls(&self) -> &ControlSchedule {
        &self.controls
    }

    pub fn noise(&self) -> &NoiseProfile {
        &self.noise
    }

    pub fn steps(&self) -> usize {
        self.controls.steps()
    }

    pub fn start(&self) -> &StateTimePoint {
        &self.points[0]
    }

    pub fn end(&self) -> &StateTimePoint {
        self.points.last().expect("non-empty by construction")
    }

    pub fn dt(&self) -> f64 {
        self.controls.dt()
    }
}

/// Simulates the model forward from `(x0, t0)` under the given controls and
/// increments. Times are computed as `t0 + i * dt` rather than accumulated.
pub fn rollout(
    model: &DynamicsModel,
    x0: &[f64],
    t0: f64,
    controls: &ControlSchedule,
    noise: &NoiseProfile,
) -> Result<Trajectory> {
    if controls.steps() != noise.steps() {
        return Err(invalid!(
            "controls have {} steps but noise has {}",
            controls.steps(),
            noise.steps()
        ));
    }
    if controls.dt() != noise.dt() || controls.channels() != noise.channels() {
        return Err(invalid!("controls and noise must share the grid"));
    }
    if controls.channels() != model.control_dim() {
        return Err(invalid!(
            "schedule has {} channels but model wants {}",
            controls.channels(),
            model.control_dim()
        ));
    }
    if x0.len() != model.state_dim() {
        return Err(invalid!("initial state has wrong dimension"));
    }
    if !t0.is_finite() {
        return Err(invalid!("initial time must be finite"));
    }
    let dt = controls.dt();
    let mut points = Vec::with_capacity(controls.steps() + 1);
    points.push(StateTimePoint::new(x0.to_vec(), t0));
    let mut x = x0.to_vec();
    for i in 0..controls.steps() {
        x = step_once(model, &x, controls.row(i), noise.row(i), dt)?;
        points.push(StateTimePoint::new(x.clone(), t0 + (i as f64 + 1.0) * dt));
    }
    Ok(Trajectory { points, controls: controls.clone(), noise: noise.clone() })
}

/// Noisy integrator `dx = u dt + a dw`, the one-dimensional model used by
/// the duality and quadrature verification checks.
pub fn integrator_1d(noise_scale: f64) -> Result<DynamicsModel> {
    DynamicsModel::new(
        1,
        1,
        noise_scale,
        Arc::new(|_x: &[f64], out: &mut [f64]| out[0] = 0.0),
        Arc::new(|_x: &[f64], out: &mut [f64]| out[0] = 1.0),
    )
}
