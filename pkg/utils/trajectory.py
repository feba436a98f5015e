# utils/trajectory.py
# Leader plan -> C² desired trajectories for leaders and followers.
# Every segment uses the same quintic β(τ): 0 -> 1 with zero boundary
# velocity / acceleration; followers are fixed barycentric blends of leaders.
from __future__ import annotations

import math
import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from utils.errors import OutOfHorizon, OutOfSegment
from utils.geometry import TriangleConfig, deformation_jacobians, stretch_eigenvalues, weights_matrix
from utils.planner import LeaderPlan

logger = logging.getLogger(__name__)

TIME_TOL = 1e-9   # s, slack on segment / horizon edges


# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class QuinticSegment:
    """β(τ) = a0·τ⁵ + a1·τ⁴ + a2·τ³ + a3·τ² + a4·τ + a5, τ ∈ [0, dt]."""
    a0: float
    a1: float
    a2: float
    a3: float
    a4: float
    a5: float
    dt: float

    @property
    def coeffs(self) -> Tuple[float, ...]:
        return (self.a0, self.a1, self.a2, self.a3, self.a4, self.a5)


class DesiredState(NamedTuple):
    position: np.ndarray       # (3,), z = z_HT
    velocity: np.ndarray
    acceleration: np.ndarray


class DeformationSample(NamedTuple):
    t: float
    lambda1: float
    lambda2: float
    c_col: float


@dataclass(frozen=True)
class SwarmTrajectory:
    plan: LeaderPlan
    weights: np.ndarray                # (N_followers, 3), from the initial configuration
    z_ht: float
    segment: QuinticSegment
    lambda_cd_min: Optional[float] = None
    _waypoints: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        wp = np.stack([w.as_array() for w in self.plan.waypoints]) if self.plan.waypoints else np.zeros((0, 3, 2))
        wp.setflags(write=False)
        object.__setattr__(self, "_waypoints", wp)
        w = np.asarray(self.weights, dtype=float).reshape(-1, 3)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def build(cls, plan: LeaderPlan, followers0: Sequence[Sequence[float]], z_ht: float,
              dt: Optional[float] = None, lambda_cd_min: Optional[float] = None) -> "SwarmTrajectory":
        t0 = plan.waypoints[0]
        step = dt if dt is not None else (plan.dt or 1.0)
        return cls(plan=plan, weights=weights_matrix(t0, followers0), z_ht=z_ht,
                   segment=quintic_coeffs(step), lambda_cd_min=lambda_cd_min)

    @property
    def dt(self) -> float:
        return self.segment.dt

    @property
    def horizon(self) -> float:
        return self.plan.n_segments * self.segment.dt

    @property
    def n_followers(self) -> int:
        return len(self.weights)

    @property
    def n_agents(self) -> int:
        return 3 + self.n_followers

    @property
    def initial(self) -> TriangleConfig:
        return self.plan.waypoints[0]


# -----------------------------------------------------------------------------
# β
# -----------------------------------------------------------------------------
def quintic_coeffs(dt: float) -> QuinticSegment:
    """Boundary conditions β(0)=0, β(dt)=1, zero β̇ and β̈ at both ends, solved as one 6×6 system."""
    if not dt > 0:
        raise ValueError(f"segment duration must be > 0 (got {dt})")
    t0, tf = 0.0, float(dt)
    mat = np.array([
        [t0 ** 5, t0 ** 4, t0 ** 3, t0 ** 2, t0, 1.0],
        [tf ** 5, tf ** 4, tf ** 3, tf ** 2, tf, 1.0],
        [5 * t0 ** 4, 4 * t0 ** 3, 3 * t0 ** 2, 2 * t0, 1.0, 0.0],
        [5 * tf ** 4, 4 * tf ** 3, 3 * tf ** 2, 2 * tf, 1.0, 0.0],
        [20 * t0 ** 3, 12 * t0 ** 2, 6 * t0, 2.0, 0.0, 0.0],
        [20 * tf ** 3, 12 * tf ** 2, 6 * tf, 2.0, 0.0, 0.0],
    ])
    rhs = np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0])
    a = np.linalg.solve(mat, rhs)
    return QuinticSegment(*(float(v) for v in a), dt=float(dt))

def _beta(seg: QuinticSegment, tau):
    a0, a1, a2, a3, a4, a5 = seg.coeffs
    b = ((((a0 * tau + a1) * tau + a2) * tau + a3) * tau + a4) * tau + a5
    bd = (((5 * a0 * tau + 4 * a1) * tau + 3 * a2) * tau + 2 * a3) * tau + a4
    bdd = ((20 * a0 * tau + 12 * a1) * tau + 6 * a2) * tau + 2 * a3
    return b, bd, bdd

def beta_eval(seg: QuinticSegment, tau: float) -> Tuple[float, float, float]:
    if tau < -TIME_TOL or tau > seg.dt + TIME_TOL:
        raise OutOfSegment(f"tau={tau} outside [0, {seg.dt}]")
    tau = min(max(tau, 0.0), seg.dt)
    b, bd, bdd = _beta(seg, tau)
    return float(b), float(bd), float(bdd)


# -----------------------------------------------------------------------------
# Desired states
# -----------------------------------------------------------------------------
def _locate(traj: SwarmTrajectory, t: float) -> Tuple[int, float]:
    if t < -TIME_TOL or t > traj.horizon + TIME_TOL:
        raise OutOfHorizon(f"t={t} outside mission horizon [0, {traj.horizon}]")
    n = traj.plan.n_segments
    if n == 0:
        return -1, 0.0
    t = min(max(t, 0.0), traj.horizon)
    k = min(int(math.floor(t / traj.dt)), n - 1)
    return k, t - k * traj.dt

def leaders_at(traj: SwarmTrajectory, t: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Planar (3, 2) position, velocity and acceleration of all three leaders."""
    k, tau = _locate(traj, t)
    wp = traj._waypoints
    if k < 0:
        z = np.zeros((3, 2))
        return wp[0].copy(), z, z.copy()
    b, bd, bdd = beta_eval(traj.segment, tau)
    pc, pn = wp[k], wp[k + 1]
    step = pn - pc
    return (1.0 - b) * pc + b * pn, bd * step, bdd * step

def _lift(xy: np.ndarray, z: float) -> np.ndarray:
    out = np.zeros(xy.shape[:-1] + (3,))
    out[..., :2] = xy
    out[..., 2] = z
    return out

def leader_desired(traj: SwarmTrajectory, l: int, t: float) -> DesiredState:
    if not 0 <= l < 3:
        raise IndexError(f"leader index must be 0, 1 or 2 (got {l})")
    p, v, a = leaders_at(traj, t)
    return DesiredState(_lift(p[l], traj.z_ht), _lift(v[l], 0.0), _lift(a[l], 0.0))

def follower_desired(traj: SwarmTrajectory, i: int, t: float) -> DesiredState:
    w = traj.weights[i]
    p, v, a = leaders_at(traj, t)
    return DesiredState(_lift(w @ p, traj.z_ht), _lift(w @ v, 0.0), _lift(w @ a, 0.0))

def fleet_desired(traj: SwarmTrajectory, t: float) -> DesiredState:
    """(N, 3) stacks for every agent: leaders 0..2 first, then followers in order."""
    p, v, a = leaders_at(traj, t)
    allw = np.vstack([np.eye(3), traj.weights])
    return DesiredState(_lift(allw @ p, traj.z_ht), _lift(allw @ v, 0.0), _lift(allw @ a, 0.0))


# -----------------------------------------------------------------------------
# Deformation time series
# -----------------------------------------------------------------------------
def sample_times(horizon: float, sample_dt: float) -> np.ndarray:
    n = int(math.floor(horizon / sample_dt + 1e-9))
    ts = sample_dt * np.arange(n + 1)
    if horizon - ts[-1] > TIME_TOL:
        ts = np.append(ts, horizon)
    return ts

def leaders_many(traj: SwarmTrajectory, ts: np.ndarray) -> np.ndarray:
    """Leader positions (S, 3, 2) at sample times inside the horizon."""
    wp = traj._waypoints
    n = traj.plan.n_segments
    if n == 0:
        return np.broadcast_to(wp[0], (len(ts), 3, 2)).copy()
    ts = np.clip(np.asarray(ts, dtype=float), 0.0, traj.horizon)
    k = np.minimum(np.floor(ts / traj.dt).astype(int), n - 1)
    b, _, _ = _beta(traj.segment, ts - k * traj.dt)
    return (1.0 - b)[:, None, None] * wp[k] + b[:, None, None] * wp[k + 1]

def deformation_series(traj: SwarmTrajectory, sample_dt: float) -> List[DeformationSample]:
    if not sample_dt > 0:
        raise ValueError(f"sample_dt must be > 0 (got {sample_dt})")
    ts = sample_times(traj.horizon, sample_dt)
    q = deformation_jacobians(traj.initial, leaders_many(traj, ts))
    lam1, lam2, _ = stretch_eigenvalues(q)
    lam_min = traj.lambda_cd_min
    ccol = (lam_min - lam1) if lam_min is not None else np.full(len(ts), np.nan)
    return [DeformationSample(float(t), float(a), float(b), float(c))
            for t, a, b, c in zip(ts, lam1, lam2, ccol)]

def rigid_phase(series: Sequence[DeformationSample], tol: float = 1e-6) -> float:
    """Duration of the initial run of samples with λ1 = λ2 = 1 within tol (0 if none)."""
    end = 0.0
    for s in series:
        if abs(s.lambda1 - 1.0) <= tol and abs(s.lambda2 - 1.0) <= tol:
            end = s.t
        else:
            break
    return end
