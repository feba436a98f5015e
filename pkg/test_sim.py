#!/usr/bin/env python3
"""
Simulation tests: closed-loop run, abort path, audit, log files.
Run directly (python test_sim.py) or through pytest.
"""

import sys
import math
import tempfile
from dataclasses import replace

import numpy as np

from utils.artifact_write import read_sim_log, write_audit, write_sim_log
from utils.control import Gains
from utils.dynamics import GRAVITY
from utils.errors import ScenarioValidationError, SimulationAborted, ThrustSingularity
from utils.geometry import TriangleConfig
from utils.planner import LeaderPlan
from utils.safety import SafetyMargins
from utils.scenario import scenario_from_dict
from utils.sim import (
    SimConfig,
    SimLog,
    _initial_states,
    agent_labels,
    audit,
    min_pairwise_distance,
    run,
)

T0 = TriangleConfig.from_points([(5, 5), (15, 5), (5, 15)])
MARGINS = SafetyMargins(epsilon=0.5, d_s=2.5, d_b=1.75, delta=0.1, delta_max=0.75, lambda_cd_min=0.48)


def _scenario(denominator: int = 4, **sim):
    return scenario_from_dict({
        "name": "sim-small",
        "environment": {"bounds_m": [0.0, 0.0, 40.0, 30.0]},
        "leaders_initial_m": [[5.0, 5.0], [15.0, 5.0], [5.0, 15.0]],
        "leaders_goal_m": [[10.0, 5.0], [20.0, 5.0], [10.0, 15.0]],
        "follower_lattice_denominator": denominator,
        "epsilon_m": 0.5,
        "delta_m": 0.1,
        "z_ht_m": 10.0,
        "planner": {"dp_x_m": 5.0, "dp_y_m": 5.0, "dt_s": 20.0},
        "sim": {"step_s": 0.01, "record_decimation": 10, **sim},
    })

def _shrunk(tc: TriangleConfig, s: float) -> TriangleConfig:
    a = tc.as_array()
    c = a.mean(axis=0)
    return TriangleConfig.from_points(c + s * (a - c))

def _plan() -> LeaderPlan:
    """A rigid 5 m step east, then a shrink to 0.8 about the centroid."""
    wps = (T0, T0.translated(5, 0), _shrunk(T0.translated(5, 0), 0.8))
    return LeaderPlan(wps, (0.0, 20.0, 40.0), (0.0, 1.0, 2.0))

def _synthetic_log(deviation, nfz=None, min_pairwise=(5.0, 5.0, 5.0)) -> SimLog:
    t = np.array([0.0, 1.0, 2.0])
    actual = np.zeros((3, 3, 3))
    actual[:, :, 0] = np.array([0.0, 1.0, 2.0])[:, None]       # everyone moves 1 m east per sample
    actual[:, 1, 1] = 5.0
    actual[:, 2, 1] = 10.0
    nfz = np.zeros((3, 3), dtype=bool) if nfz is None else nfz
    return SimLog(
        labels=("L1", "L2", "L3"), t=t, actual=actual, desired=actual.copy(),
        deviation=np.asarray(deviation, dtype=float), min_pairwise=np.asarray(min_pairwise, dtype=float),
        lambda1=np.ones(3), lambda2=np.ones(3), c_col=np.full(3, 0.48 - 1.0),
        nfz_hit=nfz, exposure=np.full((3, 3), 0.5),
    )


def test_helpers():
    print("🧪 Testing agent_labels and min_pairwise_distance...")
    assert agent_labels(2) == ("L1", "L2", "L3", "F1", "F2")
    pos = np.array([[0.0, 0.0, 10.0], [3.0, 4.0, 10.0], [0.0, 0.0, 12.0]])
    assert abs(min_pairwise_distance(pos) - 2.0) <= 1e-12
    assert min_pairwise_distance(pos[:1]) == math.inf
    assert SimConfig().problems() == []
    assert len(SimConfig(step=0.0, record_decimation=0).problems()) == 2
    assert len(SimConfig(perturbation=0.06).problems(delta=0.1)) == 1

    # a duration has to cover at least one plan segment
    assert SimConfig(duration=20.0).problems(segment_dt=20.0) == []
    assert len(SimConfig(duration=19.5).problems(segment_dt=20.0)) == 1
    assert SimConfig(duration=2.0).problems() == []
    try:
        _scenario(duration_s=2.0)
        raise AssertionError("duration shorter than a segment accepted")
    except ScenarioValidationError as e:
        assert any("shorter than one plan segment" in p for p in e.problems), e.problems
    print("✅ helpers behave")


def test_run_tracks_plan():
    print("🧪 Testing a closed-loop run against a rigid + shrink plan...")
    sc = _scenario()
    assert sc.n_agents == 6
    log = run(sc, _plan())
    assert log.complete and log.abort_reason is None
    assert log.labels == ("L1", "L2", "L3", "F1", "F2", "F3")
    assert log.n_samples == 401
    assert abs(log.t[-1] - 40.0) <= 1e-9
    assert log.actual.shape == (401, 6, 3) and log.deviation.shape == (401, 6)

    assert np.all(log.deviation[0] == 0.0)
    assert log.deviation.max() <= sc.delta
    assert np.allclose(log.actual[..., 2], 10.0, atol=1e-2)
    assert abs(log.lambda1[-1] - 0.8) <= 1e-9 and abs(log.lambda2[-1] - 0.8) <= 1e-9
    assert np.all(log.c_col <= 0.0)
    assert not log.nfz_hit.any() and not log.exposure.any()

    end = _plan().waypoints[-1].as_array()
    assert np.allclose(log.actual[-1, :3, :2], end, atol=sc.delta)

    report = audit(log, sc.margins, transient=2.0)
    assert report.passed, report.lines()
    assert report.min_pairwise >= 2.0 - sc.delta
    assert report.travel[0] > 4.9
    assert report.exposure == tuple([0.0] * 6)
    print(f"✅ max deviation {log.deviation.max():.4f} m within δ={sc.delta}")


def test_run_is_deterministic():
    print("🧪 Testing seeded perturbation and determinism...")
    sc = _scenario(perturbation_m=0.05, seed=7).with_sim(duration=2.0)
    a = run(sc, _plan())
    b = run(sc, _plan())
    assert a.n_samples == 21
    assert np.array_equal(a.actual, b.actual) and np.array_equal(a.deviation, b.deviation)
    assert np.all(a.deviation[0] > 0.0) and np.all(a.deviation[0] <= 0.05 + 1e-12)

    c = run(sc.with_sim(seed=8), _plan())
    assert not np.array_equal(a.deviation[0], c.deviation[0])
    print("✅ same seed, same log")


def test_run_abort_keeps_partial_log():
    print("🧪 Testing abort on an unrealizable thrust command...")
    for seed in range(50):
        x0 = _initial_states(np.zeros((6, 3)), SimConfig(perturbation=0.05, seed=seed), GRAVITY)
        if x0[:, 2].max() > 1e-3:
            break
    # a large position gain turns any upward offset into a downward command below -g
    sc = replace(_scenario(perturbation_m=0.05, seed=seed), gains=Gains(gamma2=1e9))
    try:
        run(sc, _plan())
        raise AssertionError("run did not abort")
    except SimulationAborted as e:
        assert isinstance(e.cause, ThrustSingularity)
        assert e.exit_code == 4
        assert e.partial_log is not None and not e.partial_log.complete
        assert e.partial_log.n_samples == 1
        assert "ThrustSingularity" in e.partial_log.abort_reason
    print("✅ SimulationAborted carries the partial log")


def test_audit_checks():
    print("🧪 Testing audit...")
    ok = audit(_synthetic_log(np.full((3, 3), 0.05)), MARGINS)
    assert ok.passed
    assert np.allclose(ok.exposure, (1.0, 1.0, 1.0))
    assert np.allclose(ok.travel, (2.0, 2.0, 2.0))
    assert ok.max_c_col == 0.48 - 1.0 and ok.two_epsilon == 1.0

    late = audit(_synthetic_log([[0.0] * 3, [0.0, 0.2, 0.0], [0.0] * 3]), MARGINS)
    assert not late.deviation_ok and not late.passed
    assert abs(late.max_deviation - 0.2) <= 1e-12
    early = audit(_synthetic_log([[0.3] * 3, [0.0] * 3, [0.0] * 3]), MARGINS, transient=1.0)
    assert early.passed and early.transient == 1.0

    hits = np.zeros((3, 3), dtype=bool)
    hits[1, 2] = True
    zone = audit(_synthetic_log(np.zeros((3, 3)), hits), MARGINS)
    assert zone.nfz_hits == 1 and not zone.passed
    assert any(line.startswith("❌") and "NFZ" in line for line in zone.lines())

    close = audit(_synthetic_log(np.zeros((3, 3)), min_pairwise=(5.0, 0.9, 5.0)), MARGINS)
    assert close.min_pairwise == 0.9 and not close.separation_ok and not close.passed
    assert close.deviation_ok and close.c_col_ok and close.nfz_hits == 0
    assert any(line.startswith("❌") and "min pairwise" in line for line in close.lines())
    touching = audit(_synthetic_log(np.zeros((3, 3)), min_pairwise=(5.0, 1.0, 5.0)), MARGINS)
    assert touching.separation_ok and touching.passed
    print("✅ audit flags deviation, separation, zone hits and honours the transient window")


def test_run_separation_matches_brute_force():
    print("🧪 Testing the separation verdict against a pairwise scan...")
    rng = np.random.default_rng(11)
    verdicts = set()
    for n in range(6):
        sc = _scenario(denominator=3 + n % 3, perturbation_m=float(rng.uniform(0.0, 0.05)),
                       seed=int(rng.integers(1000)))
        d0 = min_pairwise_distance(np.vstack([T0.as_array(), sc.followers0]))
        # even runs squeeze the closest pair under 2ε, odd runs stop short of it
        target = rng.uniform(0.6, 0.9) if n % 2 == 0 else rng.uniform(1.15, 1.5)
        plan = LeaderPlan((T0, _shrunk(T0, target / d0)), (0.0, 20.0), (0.0, 1.0))
        log = run(sc, plan)
        report = audit(log, sc.margins)

        worst = math.inf
        for s in range(log.n_samples):
            here = math.inf
            for i in range(log.n_agents):
                for j in range(i + 1, log.n_agents):
                    here = min(here, math.dist(log.actual[s, i], log.actual[s, j]))
            assert abs(here - log.min_pairwise[s]) <= 1e-9
            worst = min(worst, here)

        assert abs(report.min_pairwise - worst) <= 1e-9
        assert report.separation_ok == (worst >= 2 * sc.margins.epsilon), (n, worst)
        assert report.separation_ok == (n % 2 == 1), (n, worst)
        verdicts.add(report.separation_ok)
    assert verdicts == {True, False}
    print("✅ audit separation verdicts agree with the pairwise scan")


def test_run_zero_length_plan():
    print("🧪 Testing a plan with no segments...")
    sc = _scenario().with_sim(duration=5.0)
    log = run(sc, LeaderPlan((T0,), (0.0,), (0.0,)))
    assert log.complete and log.n_samples == 51
    assert log.deviation.max() <= 1e-9
    assert np.allclose(log.actual, log.actual[0], atol=1e-9)
    assert np.allclose(log.lambda1, 1.0, atol=1e-12) and np.allclose(log.lambda2, 1.0, atol=1e-12)

    report = audit(log, sc.margins)
    assert report.passed, report.lines()
    assert max(report.travel) <= 1e-9
    print("✅ fleet holds the initial formation at rest")


def test_run_decimation_keeps_samples():
    print("🧪 Testing that record decimation only thins the log...")
    sc = _scenario(perturbation_m=0.05, seed=3).with_sim(duration=2.0)
    fine = run(sc.with_sim(record_decimation=1), _plan())
    coarse = run(sc.with_sim(record_decimation=10), _plan())
    assert fine.n_samples == 201 and coarse.n_samples == 21

    for name in ("t", "actual", "desired", "deviation", "min_pairwise", "nfz_hit"):
        assert np.array_equal(getattr(coarse, name), getattr(fine, name)[::10]), name
    for name in ("lambda1", "lambda2", "c_col", "exposure"):
        assert np.allclose(getattr(coarse, name), getattr(fine, name)[::10], rtol=0.0, atol=1e-12), name
    print("✅ decimated samples equal the full-rate ones")


def test_log_files():
    print("🧪 Testing sim log CSVs and audit JSON...")
    log = _synthetic_log(np.full((3, 3), 0.05))
    with tempfile.TemporaryDirectory() as d:
        count, reason = write_sim_log(d, log)
        assert (count, reason) == (9, "OK")
        back = read_sim_log(d)
        assert back.labels == log.labels and back.n_samples == 3
        assert np.allclose(back.actual, log.actual) and np.allclose(back.c_col, log.c_col)
        assert np.array_equal(back.nfz_hit, log.nfz_hit)
        assert write_audit(d, audit(log, MARGINS)) == (1, "OK")
        assert read_sim_log(d + "/missing") is None
    print("✅ logs written and read back")


def run_all_tests():
    """Run all tests and return overall status"""
    print("🚀 Starting sim tests...\n")

    tests = [
        test_helpers,
        test_run_tracks_plan,
        test_run_is_deterministic,
        test_run_abort_keeps_partial_log,
        test_run_separation_matches_brute_force,
        test_run_zero_length_plan,
        test_run_decimation_keeps_samples,
        test_audit_checks,
        test_log_files,
    ]

    results = []
    for test in tests:
        try:
            test()
            results.append(True)
            print()
        except Exception as e:
            print(f"❌ {test.__name__} failed: {e!r}\n")
            results.append(False)

    passed = sum(results)
    total = len(results)
    print(f"📊 Test Results: {passed}/{total} tests passed")
    if passed == total:
        print("🎉 All sim tests passed!")
        return True
    print("⚠️ Some sim tests failed.")
    return False


if __name__ == "__main__":
    success = run_all_tests()
    sys.exit(0 if success else 1)
