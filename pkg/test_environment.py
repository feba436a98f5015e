#!/usr/bin/env python3
"""
Environment tests: risk raster, walkers, no-fly zones.
Run directly (python test_environment.py) or through pytest.
"""

import os
import sys
import math
import tempfile

import numpy as np

from utils.environment import (
    Environment,
    Rect,
    RiskField,
    Walker,
    human_probability,
    human_probability_many,
    in_nfz,
    walker_position,
)
from utils.errors import OutOfBounds
from utils.geometry import Point2

WALKER = Walker(start=Point2(50, 25), end=Point2(5, 25), speed=45 / 200, radius_of_influence=5.0, peak_probability=1.0)


def test_risk_grid_interpolation():
    print("🧪 Testing Pr(Human) bilinear lookup...")
    b = Rect(0, 0, 10, 10)
    zero = Environment(bounds=b, risk=RiskField.zeros(b))
    for p in ((0, 0), (3.3, 7.1), (10, 10)):
        assert human_probability(zero, p, 0.0) == 0.0

    grid = RiskField((0.0, 0.0), 1.0, np.array([[0.0, 0.0], [1.0, 1.0]]))
    env = Environment(bounds=Rect(0, 0, 1, 1), risk=grid)
    assert abs(human_probability(env, (0.5, 0.5), 0.0) - 0.5) <= 1e-12
    assert human_probability(env, (0.0, 1.0), 0.0) == 1.0
    assert human_probability(env, (1.0, 0.0), 0.0) == 0.0

    rng = np.random.default_rng(0)
    vals = rng.uniform(0.0, 1.0, (5, 7))
    field = RiskField((2.0, -1.0), 0.5, vals)
    env = Environment(bounds=Rect(2.0, -1.0, 5.0, 1.0), risk=field)
    for j in range(5):
        for i in range(7):
            assert abs(human_probability(env, (2.0 + 0.5 * i, -1.0 + 0.5 * j), 0.0) - vals[j, i]) <= 1e-12
    print("✅ bilinear lookup hits nodes and cell centres")


def test_risk_field_sources():
    print("🧪 Testing risk rasters from CSV and blobs...")
    vals = np.array([[0.0, 0.2, 0.4], [0.1, 0.3, 0.5]])
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "risk.csv")
        np.savetxt(path, vals, delimiter=",")
        field = RiskField.from_csv(path, (0.0, 0.0), 2.0)
    assert np.allclose(field.values, vals)
    assert field.extent == Rect(0.0, 0.0, 4.0, 2.0)
    assert not field.values.flags.writeable

    b = Rect(0, 0, 20, 20)
    blobs = RiskField.from_blobs(b, [{"center_m": (10, 10), "sigma_m": 3.0, "peak": 0.8}])
    env = Environment(bounds=b, risk=blobs)
    assert abs(human_probability(env, (10, 10), 0.0) - 0.8) <= 1e-12
    assert human_probability(env, (0, 0), 0.0) < 0.01
    assert blobs.extent.contains_rect(b)
    print("✅ CSV and blob rasters load")


def test_walker_position_examples():
    print("🧪 Testing walker_position...")
    assert walker_position(WALKER, 0.0) == (50.0, 25.0)
    p = walker_position(WALKER, 100.0)
    assert math.hypot(p.x - 27.5, p.y - 25.0) <= 1e-9
    p = walker_position(WALKER, 200.0)
    assert math.hypot(p.x - 5.0, p.y - 25.0) <= 1e-9
    # parked at the end after arrival
    assert walker_position(WALKER, 500.0) == walker_position(WALKER, 200.0)
    print("✅ walker_position examples hold")


def test_walker_presence():
    print("🧪 Testing walker Pr(Human) bump and corridor view...")
    env = Environment(bounds=Rect(0, 0, 60, 40), walkers=(WALKER,))
    assert abs(human_probability(env, (27.5, 25.0), 100.0) - 1.0) <= 1e-9
    assert abs(human_probability(env, (27.5, 27.5), 100.0) - 0.5) <= 1e-9
    assert human_probability(env, (27.5, 31.0), 100.0) == 0.0
    # far from the walker now, but on its path
    assert human_probability(env, (10.0, 25.0), 0.0) == 0.0

    corridor = env.planning_view()
    assert corridor.walkers_as_corridors and not env.walkers_as_corridors
    for t in (0.0, 100.0, 400.0):
        assert abs(human_probability(corridor, (10.0, 25.0), t) - 1.0) <= 1e-12
        assert abs(human_probability(corridor, (10.0, 27.5), t) - 0.5) <= 1e-12

    quiet = Environment(bounds=Rect(0, 0, 60, 40))
    assert quiet.planning_view() is quiet
    print("✅ walker presence behaves")


def test_human_probability_vectorized():
    print("🧪 Testing vectorized Pr(Human)...")
    b = Rect(0, 0, 60, 40)
    env = Environment(bounds=b, risk=RiskField.from_blobs(b, [{"center_m": (30, 10), "sigma_m": 6.0, "peak": 0.8}]),
                      walkers=(WALKER,))
    rng = np.random.default_rng(9)
    pts = rng.uniform((0, 0), (60, 40), (200, 2))
    many = human_probability_many(env, pts, 80.0)
    one = np.array([human_probability(env, p, 80.0) for p in pts])
    assert np.allclose(many, one, atol=1e-12)
    assert np.all((many >= 0.0) & (many <= 1.0))
    print("✅ vectorized and scalar lookups agree")


def test_bounds_and_zones():
    print("🧪 Testing bounds and no-fly zones...")
    env = Environment(bounds=Rect(0, 0, 60, 40), nfz=(Rect(25, 22, 32, 40),))
    try:
        human_probability(env, (61.0, 10.0), 0.0)
        raise AssertionError("out-of-bounds query accepted")
    except OutOfBounds:
        pass

    assert in_nfz(env, (28.5, 31.0))
    assert in_nfz(env, (25.0, 30.0))
    assert in_nfz(env, (32.0, 22.0))
    assert not in_nfz(env, (10.0, 10.0))
    assert not in_nfz(env, (24.999, 30.0))

    assert env.problems() == []
    bad = Environment(bounds=Rect(0, 0, 60, 40), nfz=(Rect(50, 30, 70, 50),),
                      walkers=(Walker(Point2(0, 0), Point2(1, 1), speed=0.0),))
    assert len(bad.problems()) == 2
    short = Environment(bounds=Rect(0, 0, 60, 40), risk=RiskField.zeros(Rect(0, 0, 30, 40)))
    assert any("does not cover" in p for p in short.problems())
    print("✅ bounds and zones behave")


def run_all_tests():
    """Run all tests and return overall status"""
    print("🚀 Starting environment tests...\n")

    tests = [
        test_risk_grid_interpolation,
        test_risk_field_sources,
        test_walker_position_examples,
        test_walker_presence,
        test_human_probability_vectorized,
        test_bounds_and_zones,
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
        print("🎉 All environment tests passed!")
        return True
    print("⚠️ Some environment tests failed.")
    return False


if __name__ == "__main__":
    success = run_all_tests()
    sys.exit(0 if success else 1)
