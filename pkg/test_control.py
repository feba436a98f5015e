#!/usr/bin/env python3
"""
Control tests: outer loop, setpoint extraction, inner loop, yaw, closed loop.
Run directly (python test_control.py) or through pytest.
"""

import sys
import math

import numpy as np

from utils.control import (
    Gains,
    Setpoints,
    control_step,
    extract_setpoints,
    inner_loop,
    outer_loop,
    yaw_control,
)
from utils.dynamics import GRAVITY, ControlInput, QuadState, integrate_step, thrust_direction
from utils.errors import ThrustSingularity
from utils.trajectory import DesiredState

G = GRAVITY


def _desired(p=(0.0, 0.0, 0.0), v=(0.0, 0.0, 0.0), a=(0.0, 0.0, 0.0)) -> DesiredState:
    return DesiredState(np.array(p, dtype=float), np.array(v, dtype=float), np.array(a, dtype=float))


def test_outer_loop_examples():
    print("🧪 Testing outer_loop...")
    gains = Gains()
    s = QuadState(x=1.0, y=2.0, z=10.0, vx=0.5)
    assert np.allclose(outer_loop(s, _desired((1, 2, 10), (0.5, 0, 0)), gains), 0.0)
    acc = (0.3, -0.2, 0.1)
    assert np.allclose(outer_loop(s, _desired((1, 2, 10), (0.5, 0, 0), acc), gains), acc)
    u = outer_loop(QuadState(), _desired((1, 0, 0)), Gains(gamma2=4.0))
    assert np.allclose(u, (4.0, 0.0, 0.0))

    shifted = QuadState(x=1.0 + 7.0, y=2.0 - 3.0, z=10.0 + 1.0, vx=0.5)
    d1 = _desired((2, 2, 9), (0.1, 0, 0))
    d2 = _desired((2 + 7.0, 2 - 3.0, 9 + 1.0), (0.1, 0, 0))
    assert np.allclose(outer_loop(s, d1, gains), outer_loop(shifted, d2, gains), atol=1e-12)
    print("✅ outer_loop examples hold")


def test_extract_setpoints_examples():
    print("🧪 Testing extract_setpoints...")
    sp = extract_setpoints(np.zeros(3), 0.0)
    assert np.allclose(sp, (G, 0.0, 0.0), rtol=0.0, atol=1e-12)

    a = 2.0
    sp = extract_setpoints(np.array([a, 0.0, 0.0]), 0.0)
    assert abs(sp.thrust - math.hypot(a, G)) <= 1e-12
    assert abs(sp.theta - math.atan(a / G)) <= 1e-12
    assert abs(sp.phi) <= 1e-15

    # roll that tilts the thrust axis toward +y is negative in this frame
    sp = extract_setpoints(np.array([0.0, a, 0.0]), 0.0)
    assert abs(sp.phi + math.asin(a / math.hypot(a, G))) <= 1e-12
    assert abs(sp.theta) <= 1e-15
    k = thrust_direction(sp.phi, sp.theta, 0.0)
    assert np.allclose(sp.thrust * k, (0.0, a, G), atol=1e-12)

    for bad in (np.array([0.0, 0.0, -G]), np.array([1.0, 0.0, -20.0])):
        try:
            extract_setpoints(bad, 0.0)
            raise AssertionError(f"U={bad} accepted")
        except ThrustSingularity:
            pass
    print("✅ extract_setpoints examples hold")


def test_setpoint_round_trip():
    print("🧪 Testing thrust-vector round trip on random commands...")
    rng = np.random.default_rng(17)
    us = rng.normal(0.0, 4.0, (2000, 3))
    us[:, 2] = np.maximum(us[:, 2], -G + 0.5)
    psis = rng.uniform(-math.pi, math.pi, 2000)
    sp = extract_setpoints(us, psis)
    rebuilt = sp.thrust[:, None] * thrust_direction(sp.phi, sp.theta, psis)
    target = us + np.array([0.0, 0.0, G])
    assert np.max(np.abs(rebuilt - target)) <= 1e-9
    assert np.all(np.abs(sp.theta) < math.pi / 2) and np.all(np.abs(sp.phi) <= math.pi / 2)

    one = extract_setpoints(us[0], float(psis[0]))
    assert isinstance(one.thrust, float)
    assert abs(one.thrust - sp.thrust[0]) <= 1e-12
    print("✅ F̄_d·k̂_b reproduces U + g·ê3")


def test_inner_loop_examples():
    print("🧪 Testing inner_loop...")
    gains = Gains()
    s = QuadState(thrust=G, phi=0.1, theta=-0.2)
    assert inner_loop(s, Setpoints(G, 0.1, -0.2), gains) == (0.0, 0.0, 0.0)

    u_t, _, _ = inner_loop(QuadState(thrust=G - 1.0), Setpoints(G, 0.0, 0.0), Gains(k_t=9.0))
    assert abs(u_t - 9.0) <= 1e-12

    cd = Gains.critically_damped()
    for kp, kd in ((cd.k_t, cd.k_t_rate), (cd.k_phi, cd.k_phi_rate), (cd.k_theta, cd.k_theta_rate),
                   (cd.k_psi, cd.k_psi_rate)):
        assert kd * kd >= 4.0 * kp - 1e-9
    assert cd == Gains()
    assert Gains().problems() == [] and len(Gains(k_t=0.0).problems()) == 1
    print("✅ inner_loop examples hold")


def test_yaw_control():
    print("🧪 Testing yaw_control...")
    gains = Gains(k_psi=4.0)
    s = QuadState(psi=0.3, psi_rate=0.2)
    assert abs(yaw_control(s, 0.3, 0.2, 0.7, gains) - 0.7) <= 1e-15
    assert abs(yaw_control(QuadState(), 0.1, 0.0, 0.0, gains) - 0.4) <= 1e-15

    # ψ̈ + k_ψ̇·ψ̇ + k_ψ·ψ = k_ψ: ω_n = 2, ζ = 0.5
    step = Gains(k_psi=4.0, k_psi_rate=2.0)
    x = QuadState.hover((0.0, 0.0, 10.0))
    peak = 0.0
    for _ in range(5000):
        u = ControlInput(0.0, 0.0, 0.0, float(yaw_control(x, 1.0, 0.0, 0.0, step)))
        x = integrate_step(x, u, 0.001)
        peak = max(peak, x.psi)
    zeta = 0.5
    expected = math.exp(-zeta * math.pi / math.sqrt(1.0 - zeta ** 2))
    assert abs((peak - 1.0) - expected) <= 2e-3, peak
    print(f"✅ yaw overshoot {peak - 1.0:.4f} vs {expected:.4f}")


def test_control_step_hover():
    print("🧪 Testing control_step at hover...")
    s = QuadState.hover((5.0, -3.0, 10.0))
    u = control_step(s, _desired((5.0, -3.0, 10.0)))
    assert isinstance(u, ControlInput)
    assert max(abs(v) for v in u) <= 1e-12

    fleet = np.stack([s.as_array(), QuadState.hover((0.0, 0.0, 10.0)).as_array()])
    des = DesiredState(np.array([[5.0, -3.0, 10.0], [0.0, 0.0, 10.0]]), np.zeros((2, 3)), np.zeros((2, 3)))
    out = control_step(fleet, des)
    assert out.shape == (2, 4) and np.max(np.abs(out)) <= 1e-12
    print("✅ zero input at hover")


def test_closed_loop_step():
    print("🧪 Testing closed-loop response to a position step...")
    x = QuadState.hover((0.0, 0.0, 10.0))
    target = _desired((1.0, -1.0, 10.5))
    for _ in range(2000):
        x = integrate_step(x, control_step(x, target), 0.01)
        assert abs(x.theta) < math.pi / 2 and abs(x.phi) < math.pi / 2
    err = np.array([x.x - 1.0, x.y + 1.0, x.z - 10.5])
    assert np.max(np.abs(err)) <= 1e-2, err
    assert abs(x.vx) <= 1e-2 and abs(x.vy) <= 1e-2
    print(f"✅ settled, max error {np.max(np.abs(err)):.2e} m")


def test_reduced_translational_loop():
    print("🧪 Testing the reduced loop ë + γ1·ė + γ2·e = 0...")
    gains = Gains()
    h, e, ed = 0.001, 1.0, 0.0
    for _ in range(3000):
        # state forced to setpoints: ë = U exactly
        u = outer_loop(QuadState(x=e, vx=ed, z=0.0), _desired(), gains)[0]
        e, ed = e + h * ed + 0.5 * h * h * u, ed + h * u
    # critically damped at ω = 1: e(t) = (1 + t)·e^{-t}
    assert abs(e - 4.0 * math.exp(-3.0)) <= 1e-3
    print(f"✅ e(3 s) = {e:.4f}, predicted {4.0 * math.exp(-3.0):.4f}")


def run_all_tests():
    """Run all tests and return overall status"""
    print("🚀 Starting control tests...\n")

    tests = [
        test_outer_loop_examples,
        test_extract_setpoints_examples,
        test_setpoint_round_trip,
        test_inner_loop_examples,
        test_yaw_control,
        test_control_step_hover,
        test_closed_loop_step,
        test_reduced_translational_loop,
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
        print("🎉 All control tests passed!")
        return True
    print("⚠️ Some control tests failed.")
    return False


if __name__ == "__main__":
    success = run_all_tests()
    sys.exit(0 if success else 1)
