//! Sampling-based planning with path-integral control corrections.
//!
//! The toolkit simulates control-affine diffusions, plans state-time
//! trajectories for them with an RRT, and sharpens the planned control with
//! an importance-weighted average of locally sampled perturbations. A
//! receding-horizon controller chains those pieces into full missions, and
//! an experiment harness runs seeded Monte Carlo batches over the bundled
//! maze worlds, aggregating outcomes by the corridor each run used.

pub mod controller;
pub mod duality;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod pi;
pub mod plot;
pub mod rrt;
pub mod rng;
pub mod sde;
pub mod worlds;

pub use controller::{
    mission_cost, replan_cycle, run_mission, run_rrt_only, sample_bundle, CorrectionMode,
    CostWeights, MissionOutcome, MissionParams, MissionResult, ReplanCycleRecord,
};
pub use duality::{
    quadrature_free_energy, run_duality_check, unforced_free_energy, DualityCheckParams,
    DualityReport,
};
pub use error::{Error, Result};
pub use experiment::{
    run_experiment, sweep, write_aggregate_csv, write_aggregates_json, write_trials_csv,
    AggregateRow, Algorithm, ExperimentConfig, ExperimentResult, ParamOverrides, SweepConfig,
    TrialSummary,
};
pub use geometry::Rect;
pub use pi::{
    compose_policy, control_correction, control_correction_cost_to_go, desirability_weights,
    duality_gap, free_energy_estimate, path_cost, path_cost_profile, ControlBounds,
    CostFunctional, DesirabilityWeights, DualityGap, FreeEnergyEstimate, PathCostBreakdown,
    PathCostProfile,
};
pub use plot::{mission_figure, outcomes_figure, SvgScene};
pub use rng::SeedStream;
pub use rrt::{
    plan, wrap_angle, Branch, DistanceMetric, ExtendOutcome, PlanResult, PlannerParams, TreeGraph,
};
pub use sde::{
    integrator_1d, rollout, sample_noise, step_once, ControlSchedule, DynamicsModel, NoiseProfile,
    StateTimePoint, Trajectory,
};
pub use worlds::{
    car_dynamics, classify_crossing, double_slit_world, open_world, single_slit_world, Corridor,
    CorridorBand, DoubleSlitGeometry, Environment, GoalSet, SlitGeometry,
};
