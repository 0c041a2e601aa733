//! Self-check of the free-energy bound on a one-dimensional integrator.
//!
//! The model is `dx = u dt + (1/sqrt(|rho|)) dw` with terminal cost
//! `Phi(x) = x^2 / 2` and no running cost, small enough that the free
//! energy has an independent answer: `x(t_f)` under the unforced dynamics
//! is Gaussian, so `xi = -(1/|rho|) log E[exp(-|rho| Phi)]` reduces to a
//! one-dimensional integral evaluated here by Simpson quadrature. The check
//! estimates the same quantity by Monte Carlo, compares the two, and then
//! verifies the bound `xi <= E[Phi(x(t_f)) + 1/2 int u^2 dt]` against a
//! panel of constant policies, each with a three-standard-error allowance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::pi::{
    duality_gap, free_energy_estimate, mean_and_standard_error, DualityGap, FreeEnergyEstimate,
};
use crate::rng::SeedStream;
use crate::sde::{integrator_1d, rollout, sample_noise, ControlSchedule};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualityCheckParams {
    /// Inverse temperature `|rho|`; the noise scale is `1/sqrt(|rho|)`.
    pub rho_magnitude: f64,
    /// Monte Carlo sample count, for the unforced free-energy estimate and
    /// for each policy's cost estimate.
    pub samples: usize,
    pub x0: f64,
    pub t_final: f64,
    pub dt: f64,
    /// Constant controls whose total cost must sit above the free energy.
    pub policies: Vec<f64>,
}

impl Default for DualityCheckParams {
    fn default() -> Self {
        DualityCheckParams {
            rho_magnitude: 4.0,
            samples: 100_000,
            x0: 1.0,
            t_final: 1.0,
            dt: 0.01,
            policies: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
        }
    }
}

impl DualityCheckParams {
    fn validate(&self) -> Result<()> {
        if !(self.rho_magnitude.is_finite() && self.rho_magnitude > 0.0) {
            return Err(invalid!("|rho| must be finite and positive"));
        }
        if self.samples < 2 {
            return Err(invalid!("need at least 2 samples"));
        }
        if !(self.dt > 0.0 && self.t_final > 0.0) {
            return Err(invalid!("dt and t_final must be positive"));
        }
        if !self.x0.is_finite() {
            return Err(invalid!("x0 must be finite"));
        }
        if self.policies.is_empty() || self.policies.iter().any(|u| !u.is_finite()) {
            return Err(invalid!("policies must be finite and non-empty"));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil() as usize
    }
}

fn terminal_cost(x: f64) -> f64 {
    0.5 * x * x
}

/// Monte Carlo terminal costs of `samples` rollouts under constant control
/// `u`, one child stream per sample.
fn terminal_cost_samples(
    params: &DualityCheckParams,
    u: f64,
    stream: &SeedStream,
) -> Result<Vec<f64>> {
    let model = integrator_1d(1.0 / params.rho_magnitude.sqrt())?;
    let steps = params.steps();
    let controls = ControlSchedule::constant(&[u], steps, params.dt)?;
    (0..params.samples)
        .into_par_iter()
        .map(|k| {
            let noise = sample_noise(&stream.child("sample", k as u64), steps, 1, params.dt)?;
            let traj = rollout(&model, &[params.x0], 0.0, &controls, &noise)?;
            Ok(terminal_cost(traj.end().state[0]))
        })
        .collect()
}

/// Free energy of the terminal cost under the unforced dynamics, by Monte
/// Carlo over `stream.child("unforced", k)`.
pub fn unforced_free_energy(
    params: &DualityCheckParams,
    stream: &SeedStream,
) -> Result<FreeEnergyEstimate> {
    params.validate()?;
    let costs = terminal_cost_samples(params, 0.0, &stream.child("unforced", 0))?;
    free_energy_estimate(&costs, params.rho_magnitude)
}

/// The same free energy by Simpson quadrature: under zero control the
/// terminal state is exactly `N(x0, t_final / |rho|)` (the Euler chain adds
/// independent Gaussian increments, so discretization introduces no error
/// in the terminal law), and the expectation of `exp(-|rho| Phi)` is a
/// one-dimensional integral.
pub fn quadrature_free_energy(rho_magnitude: f64, x0: f64, t_final: f64) -> Result<f64> {
    if !(rho_magnitude.is_finite() && rho_magnitude > 0.0 && t_final > 0.0) {
        return Err(invalid!("quadrature needs finite positive |rho| and t_final"));
    }
    let sigma = (t_final / rho_magnitude).sqrt();
    let (lo, hi) = (x0 - 12.0 * sigma, x0 + 12.0 * sigma);
    let n = 4096; // even interval count; integrand is smooth and compact
    let h = (hi - lo) / n as f64;
    let density = |x: f64| {
        let zscore = (x - x0) / sigma;
        (-0.5 * zscore * zscore).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    };
    let f = |x: f64| (-rho_magnitude * terminal_cost(x)).exp() * density(x);
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    let expectation = acc * h / 3.0;
    Ok(-expectation.ln() / rho_magnitude)
}

/// One constant policy's empirical cost and its bound comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyRow {
    pub control: f64,
    /// Mean of `Phi(x(t_f)) + 1/2 u^2 t_final` over the samples.
    pub mean_cost: f64,
    pub std_error: f64,
    pub gap: DualityGap,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualityReport {
    pub params: DualityCheckParams,
    pub free_energy: FreeEnergyEstimate,
    pub quadrature: f64,
    /// `|monte_carlo - quadrature| / |quadrature|`.
    pub relative_error: f64,
    pub policies: Vec<PolicyRow>,
    /// True when no policy violates the bound and the Monte Carlo estimate
    /// is within `quadrature_tolerance` of the quadrature value.
    pub passed: bool,
    pub quadrature_tolerance: f64,
}

impl std::fmt::Display for DualityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "duality check: |rho| = {}, {} samples, x0 = {}, t_final = {}, dt = {}",
            self.params.rho_magnitude,
            self.params.samples,
            self.params.x0,
            self.params.t_final,
            self.params.dt
        )?;
        writeln!(
            f,
            "  free energy: {:.6} +- {:.6} (monte carlo)  {:.6} (quadrature)  rel err {:.4}%",
            self.free_energy.value,
            self.free_energy.std_error,
            self.quadrature,
            100.0 * self.relative_error
        )?;
        for row in &self.policies {
            writeln!(
                f,
                "  policy u = {:+.2}: cost {:.6} +- {:.6}  margin {:+.6}  [{}]",
                row.control,
                row.mean_cost,
                row.std_error,
                row.gap.gap,
                if row.gap.violated { "VIOLATED" } else { "ok" }
            )?;
        }
        write!(f, "  verdict: {}", if self.passed { "pass" } else { "FAIL" })
    }
}

/// Runs the full check: Monte Carlo free energy, quadrature comparison,
/// and the bound against every configured policy.
pub fn run_duality_check(
    params: &DualityCheckParams,
    stream: &SeedStream,
) -> Result<DualityReport> {
    params.validate()?;
    let free_energy = unforced_free_energy(params, stream)?;
    let quadrature = quadrature_free_energy(params.rho_magnitude, params.x0, params.t_final)?;
    let relative_error = (free_energy.value - quadrature).abs() / quadrature.abs();
    let control_steps = params.steps() as f64;
    let mut policies = Vec::with_capacity(params.policies.len());
    for (i, &u) in params.policies.iter().enumerate() {
        let terminal = terminal_cost_samples(params, u, &stream.child("policy", i as u64))?;
        // The control integral is deterministic on the grid.
        let control_term = 0.5 * u * u * control_steps * params.dt;
        let totals: Vec<f64> = terminal.iter().map(|c| c + control_term).collect();
        let (mean_cost, std_error) = mean_and_standard_error(&totals)?;
        let gap = duality_gap(free_energy.value, mean_cost, std_error);
        policies.push(PolicyRow { control: u, mean_cost, std_error, gap });
    }
    let quadrature_tolerance = 0.02;
    let passed =
        relative_error <= quadrature_tolerance && policies.iter().all(|row| !row.gap.violated);
    Ok(DualityReport {
        params: params.clone(),
        free_energy,
        quadrature,
        relative_error,
        policies,
        passed,
        quadrature_tolerance,
    })
}
