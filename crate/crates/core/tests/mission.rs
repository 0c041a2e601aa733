//! Receding-horizon missions and the experiment harness around them.

use std::time::Duration;

use pirrt_core::{
    car_dynamics, classify_crossing, mission_cost, run_experiment, run_mission, run_rrt_only,
    Algorithm, CostWeights, Environment, ExperimentConfig, MissionOutcome, MissionParams,
    MissionResult, SeedStream, StateTimePoint, Trajectory,
};

fn start() -> StateTimePoint {
    StateTimePoint::new(vec![-9.0, 0.0, 0.0], 0.0)
}

fn same_trajectory(a: &Trajectory, b: &Trajectory) -> bool {
    a.points().len() == b.points().len()
        && a.points().iter().zip(b.points()).all(|(p, q)| {
            p.time.to_bits() == q.time.to_bits()
                && p.state.iter().zip(&q.state).all(|(x, y)| x.to_bits() == y.to_bits())
        })
}

fn benchmark_mission(seed: u64) -> (Environment, MissionResult) {
    let env = Environment::preset("single_slit").unwrap();
    let model = car_dynamics(2.0, 1.0, 0.25).unwrap();
    let cost = mission_cost(&env, CostWeights::default());
    let result = run_mission(
        &model,
        &env,
        &cost,
        &start(),
        &MissionParams::default(),
        &SeedStream::new(seed),
    )
    .unwrap();
    (env, result)
}

#[test]
fn executed_trajectories_are_contiguous_and_on_grid() {
    let (env, result) = benchmark_mission(7);
    let points = result.executed.points();
    assert_eq!(points[0].state, start().state);
    assert_eq!(points[0].time, 0.0);
    for pair in points.windows(2) {
        let dt = pair[1].time - pair[0].time;
        assert!((dt - 0.1).abs() < 1e-9, "executed steps must stay on the grid, got {dt}");
    }
    let end = result.executed.end();
    assert!(end.time <= 10.0 + 1e-9);
    assert!(!result.cycles.is_empty());
    match result.outcome {
        MissionOutcome::Success => assert!(env.goal.contains(end)),
        MissionOutcome::GoalMiss => assert!(!env.goal.contains(end)),
        MissionOutcome::Collision | MissionOutcome::Timeout => {}
    }
}

#[test]
fn the_reported_corridor_matches_the_executed_trajectory() {
    for seed in [3, 7, 21] {
        let (env, result) = benchmark_mission(seed);
        assert_eq!(
            result.corridor,
            classify_crossing(&result.executed, &env),
            "seed {seed}: recorded corridor must match a fresh classification"
        );
    }
}

#[test]
fn missions_replay_bit_for_bit() {
    let (_, first) = benchmark_mission(7);
    let (_, second) = benchmark_mission(7);
    assert_eq!(first.outcome, second.outcome);
    assert_eq!(first.terminal_cost.to_bits(), second.terminal_cost.to_bits());
    assert!(same_trajectory(&first.executed, &second.executed));
}

#[test]
fn an_exhausted_wall_clock_reports_a_timeout() {
    let env = Environment::preset("single_slit").unwrap();
    let model = car_dynamics(2.0, 1.0, 0.25).unwrap();
    let cost = mission_cost(&env, CostWeights::default());
    let mut params = MissionParams::default();
    params.wall_timeout = Some(Duration::from_nanos(1));
    let result = run_mission(&model, &env, &cost, &start(), &params, &SeedStream::new(7)).unwrap();
    assert_eq!(result.outcome, MissionOutcome::Timeout);
}

#[test]
fn mission_records_round_trip_through_json() {
    let (_, result) = benchmark_mission(3);
    let json = serde_json::to_string(&result).unwrap();
    let back: MissionResult = serde_json::from_str(&json).unwrap();
    assert_eq!(back.outcome, result.outcome);
    assert_eq!(back.corridor, result.corridor);
    assert_eq!(back.terminal_cost.to_bits(), result.terminal_cost.to_bits());
    assert!(same_trajectory(&back.executed, &result.executed));
    assert_eq!(back.cycles.len(), result.cycles.len());
    for (a, b) in back.cycles.iter().zip(&result.cycles) {
        // Infeasible members travel as null and come back as +inf.
        assert_eq!(a.bundle_costs.len(), b.bundle_costs.len());
        for (x, y) in a.bundle_costs.iter().zip(&b.bundle_costs) {
            assert!(x.to_bits() == y.to_bits() || (x.is_infinite() && y.is_infinite()));
        }
        assert_eq!(a.weights, b.weights);
    }
    // Wall time is measurement, not content; it does not survive the trip.
    assert_eq!(back.wall_time, Duration::ZERO);
}

#[test]
fn the_baseline_controller_ignores_cost_weights() {
    let env = Environment::preset("single_slit").unwrap();
    let model = car_dynamics(2.0, 1.0, 0.25).unwrap();
    let params = MissionParams::default();
    let cheap = mission_cost(&env, CostWeights { terminal_position: 1.0 });
    let steep = mission_cost(&env, CostWeights { terminal_position: 7.5 });
    let a = run_rrt_only(&model, &env, &cheap, &start(), &params, &SeedStream::new(11)).unwrap();
    let b = run_rrt_only(&model, &env, &steep, &start(), &params, &SeedStream::new(11)).unwrap();
    assert!(same_trajectory(&a.executed, &b.executed), "weights must not steer the baseline");
    if a.terminal_cost > 0.0 {
        assert!((b.terminal_cost / a.terminal_cost - 7.5).abs() < 1e-9);
    }
}

#[test]
fn aggregate_counts_are_conserved() {
    let config = ExperimentConfig::new("single_slit", Algorithm::PiRrt, 0.25, 8, 11);
    let result = run_experiment(&config).unwrap();
    let row = &result.aggregate;
    assert_eq!(row.trials, 8);
    assert_eq!(result.trials.len(), 8);
    assert_eq!(row.successes() + row.failures(), row.trials);
    assert_eq!(
        row.bottom_corner + row.bottom_slit + row.top_slit + row.top_corner
            + row.success_no_crossing,
        row.successes(),
        "every success lands in exactly one corridor bucket"
    );
    assert_eq!(row.failures(), row.collisions + row.goal_misses + row.timeouts);

    let environment = config.environment().unwrap();
    assert_eq!(result.environment_sha256, environment.content_hash().unwrap());
    assert_eq!(result.environment_name, environment.name);

    for (i, trial) in result.trials.iter().enumerate() {
        assert_eq!(trial.trial, i);
    }
    let successes =
        result.trials.iter().filter(|t| t.outcome == MissionOutcome::Success).count();
    assert_eq!(successes, row.successes(), "trial rows must agree with the aggregate");
}

#[test]
fn trial_streams_are_isolated_from_the_batch_size() {
    // Trial k of a 4-trial batch equals trial k of an 8-trial batch.
    let small = run_experiment(&ExperimentConfig::new("single_slit", Algorithm::Rrt, 0.25, 4, 5))
        .unwrap();
    let large = run_experiment(&ExperimentConfig::new("single_slit", Algorithm::Rrt, 0.25, 8, 5))
        .unwrap();
    for (a, b) in small.trials.iter().zip(&large.trials) {
        assert_eq!(a.outcome, b.outcome);
        assert_eq!(a.corridor, b.corridor);
        assert_eq!(a.terminal_cost.to_bits(), b.terminal_cost.to_bits());
    }
}

#[test]
fn paired_streams_change_the_noise_but_not_the_contract() {
    let mut config = ExperimentConfig::new("single_slit", Algorithm::PiRrt, 0.25, 4, 9);
    config.paired_streams = true;
    let paired = run_experiment(&config).unwrap();
    assert_eq!(paired.aggregate.trials, 4);
    assert_eq!(paired.aggregate.successes() + paired.aggregate.failures(), 4);
    // Pairing strips the algorithm from the stream labels, so outcomes may
    // differ from the unpaired batch; reruns must still be identical.
    let again = run_experiment(&config).unwrap();
    for (a, b) in paired.trials.iter().zip(&again.trials) {
        assert_eq!(a.outcome, b.outcome);
        assert_eq!(a.terminal_cost.to_bits(), b.terminal_cost.to_bits());
    }
}
