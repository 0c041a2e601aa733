#!/usr/bin/env python3
"""Smoke test for the pirrt extension module.

Builds nothing itself: expects `cargo build -p pirrt-python` to have produced
target/debug/libpirrt.so (or .dylib). The library is staged into a temp
directory under the importable name and exercised end to end against numpy
references.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

REPO = Path(__file__).resolve().parent.parent


def stage_module() -> None:
    candidates = [
        REPO / "target" / "debug" / "libpirrt.so",
        REPO / "target" / "debug" / "libpirrt.dylib",
        REPO / "target" / "release" / "libpirrt.so",
        REPO / "target" / "release" / "libpirrt.dylib",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("libpirrt not found; run `cargo build -p pirrt-python` first")
    stage = Path(tempfile.mkdtemp(prefix="pirrt_py_"))
    shutil.copy2(built, stage / "pirrt.so")
    sys.path.insert(0, str(stage))


stage_module()
import pirrt  # noqa: E402


def check_weights() -> None:
    rng = np.random.default_rng(7)
    costs = rng.uniform(0.0, 5.0, size=64)
    rho = 16.0
    got = np.array(pirrt.desirability_weights(costs.tolist(), rho))
    shifted = -rho * (costs - costs.min())
    want = np.exp(shifted) / np.exp(shifted).sum()
    assert np.allclose(got, want, rtol=1e-12, atol=1e-15), "weights disagree with softmax"
    assert math.isclose(got.sum(), 1.0, rel_tol=1e-12)

    value, std_error = pirrt.free_energy(costs.tolist(), rho)
    want_fe = -math.log(np.exp(-rho * (costs - costs.min())).mean()) / rho + costs.min()
    assert math.isclose(value, want_fe, rel_tol=1e-12), f"{value} vs {want_fe}"
    assert std_error >= 0.0
    print("weights + free energy match numpy references")


def check_environment() -> None:
    env = pirrt.Environment.preset("single_slit")
    assert env.name == "single_slit"
    assert env.point_free(0.0, 0.0), "slit center must be free"
    assert not env.point_free(0.0, 2.0), "upper block must be occupied"
    assert env.goal_radius == 1.0 and env.goal_center == (9.0, 0.0)
    lo, hi = env.goal_time_window
    assert lo < hi
    round_trip = pirrt.Environment.from_toml(env.to_toml())
    assert round_trip.content_hash() == env.content_hash(), "TOML round trip changed the world"
    print(f"environment preset ok (sha256 {env.content_hash()[:12]}...)")


def check_plan() -> None:
    env = pirrt.Environment.preset("open")
    result = pirrt.plan(env, alpha=0.25, seed=11)
    assert result.reached_goal, "open world plan should reach the goal"
    t, x, y, _ = result.branch()[-1]
    assert (x - 9.0) ** 2 + y**2 <= 1.0**2 + 1e-9, "branch endpoint outside goal disc"
    assert 9.5 - 1e-9 <= t <= 10.0 + 1e-9
    assert len(result.controls()) == len(result.branch()) - 1
    print(f"plan ok ({result.vertex_count} vertices, {result.iterations} iterations)")


def check_mission() -> None:
    env = pirrt.Environment.preset("single_slit")
    mission = pirrt.run_mission(env, algorithm="pi_rrt", alpha=0.25, seed=7)
    assert mission.outcome in {"success", "collision", "goal_miss", "timeout"}
    points = mission.executed()
    assert points[0][1:] == (-9.0, 0.0, 0.0), "mission must start at the initial state"
    assert all(abs(u) <= 1.0 + 1e-12 for u in mission.controls()), "controls must stay in the box"
    assert mission.cycle_count >= 1
    print(f"mission ok ({mission.outcome}, {len(points) - 1} steps)")


def check_experiment() -> None:
    result = pirrt.run_experiment(
        scenario="single_slit", algorithm="pi_rrt", alpha=0.25, trials=4, master_seed=3
    )
    assert result.trials == 4
    assert result.successes + result.failures == 4
    corridors = result.corridors()
    assert sum(corridors.values()) <= result.successes + result.failures
    rows = result.trial_records()
    assert len(rows) == 4 and all(r[1] in {"success", "collision", "goal_miss", "timeout"} for r in rows)
    print(f"experiment ok ({result.successes}/{result.trials} succeeded)")


def check_duality() -> None:
    report = pirrt.check_duality(samples=20_000, rho_magnitude=4.0, seed=0)
    assert report.passed, f"duality check failed: {report!r}"
    assert report.relative_error < 0.02
    for control, mean_cost, _se, gap, violated in report.policies():
        assert not violated, f"policy u={control} violates the bound"
        assert gap >= -1e-9 or not violated
        assert mean_cost >= report.free_energy - 3.0 * _se
    print(f"duality ok (xi={report.free_energy:.6f}, quadrature={report.quadrature:.6f})")


def main() -> None:
    check_weights()
    check_environment()
    check_plan()
    check_mission()
    check_experiment()
    check_duality()
    print("smoke test passed")


if __name__ == "__main__":
    main()
