# utils/sim.py
# Closed-loop mission executor + safety audit.
# - all N UAVs (leaders first) advance together under control_step + RK4
# - every `record_decimation` steps a sample is logged (positions, deviation,
#   pairwise separation, λ1/λ2/C_Col of the commanded deformation, NFZ flags, Pr exposure)
from __future__ import annotations

import os
import math
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np

from utils.control import Gains, control_step
from utils.dynamics import STATE_DIM, THETA, THRUST, VehicleParams, integrate_step
from utils.environment import Environment, human_probability_many
from utils.errors import GimbalLock, NonFiniteState, SimulationAborted, ThrustSingularity
from utils.geometry import deformation_jacobians, stretch_eigenvalues
from utils.planner import LeaderPlan
from utils.safety import COLLISION_TOL, SafetyMargins, point_rect_distance
from utils.trajectory import SwarmTrajectory, fleet_desired, leaders_at

if TYPE_CHECKING:
    from utils.scenario import Scenario

logger = logging.getLogger(__name__)
DEBUG = os.getenv("SIM_DEBUG", "false").lower() in ("1", "true", "yes", "y")

# ---------- Tunables (env overrides) ----------
SIM_STEP           = float(os.getenv("CD_SIM_STEP", "0.01"))        # s
RECORD_DECIMATION  = int(os.getenv("CD_RECORD_DECIMATION", "10"))
GIMBAL_LIMIT       = math.pi / 2


# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class SimConfig:
    step: float = SIM_STEP
    duration: Optional[float] = None         # None -> plan horizon
    record_decimation: int = RECORD_DECIMATION
    seed: int = 0
    perturbation: float = 0.0                # m, initial position offset bound

    def problems(self, segment_dt: Optional[float] = None, delta: Optional[float] = None) -> List[str]:
        """Config errors; `segment_dt` and `delta` enable the checks that need the planner and the margins."""
        out: List[str] = []
        if not self.step > 0:
            out.append("sim.step must be > 0")
        if self.record_decimation < 1:
            out.append("sim.record_decimation must be >= 1")
        if self.duration is not None and not self.duration > 0:
            out.append("sim.duration must be > 0")
        elif self.duration is not None and segment_dt is not None and self.duration < segment_dt - 1e-12:
            out.append(f"sim.duration={self.duration} is shorter than one plan segment (dt={segment_dt})")
        if self.perturbation < 0:
            out.append("sim.perturbation must be >= 0")
        if delta is not None and self.perturbation > 0.5 * delta + 1e-12:
            out.append(f"sim.perturbation={self.perturbation} exceeds delta/2={0.5 * delta}")
        return out


@dataclass
class SimLog:
    labels: Tuple[str, ...]
    t: np.ndarray                  # (S,)
    actual: np.ndarray             # (S, N, 3)
    desired: np.ndarray            # (S, N, 3)
    deviation: np.ndarray          # (S, N)
    min_pairwise: np.ndarray       # (S,)
    lambda1: np.ndarray            # (S,)
    lambda2: np.ndarray
    c_col: np.ndarray
    nfz_hit: np.ndarray            # (S, N) bool
    exposure: np.ndarray           # (S, N) Pr(Human) at the actual position
    complete: bool = True
    abort_reason: Optional[str] = None

    @property
    def n_agents(self) -> int:
        return len(self.labels)

    @property
    def n_samples(self) -> int:
        return len(self.t)


@dataclass(frozen=True)
class AuditReport:
    max_deviation: float
    delta: float
    deviation_ok: bool
    min_pairwise: float
    two_epsilon: float
    separation_ok: bool
    max_c_col: float
    c_col_ok: bool
    nfz_hits: int
    exposure: Tuple[float, ...]          # ∫ Pr dt per UAV
    travel: Tuple[float, ...]            # path length per UAV, m
    complete: bool = True
    transient: float = 0.0

    @property
    def passed(self) -> bool:
        return self.complete and self.deviation_ok and self.separation_ok and self.c_col_ok and self.nfz_hits == 0

    def lines(self) -> List[str]:
        mark = lambda ok: "✅" if ok else "❌"
        return [
            f"{mark(self.deviation_ok)} max deviation {self.max_deviation:.4f} m vs δ={self.delta:.4f} m (after {self.transient:.1f} s)",
            f"{mark(self.separation_ok)} min pairwise {self.min_pairwise:.4f} m vs 2ε={self.two_epsilon:.4f} m",
            f"{mark(self.c_col_ok)} max C_Col {self.max_c_col:.3e}",
            f"{mark(self.nfz_hits == 0)} NFZ hits {self.nfz_hits}",
            f"ℹ️ exposure ∫Pr dt total {sum(self.exposure):.3f} s, travel total {sum(self.travel):.2f} m",
        ]


# -----------------------------------------------------------------------------
# Helpers
# -----------------------------------------------------------------------------
def agent_labels(n_followers: int) -> Tuple[str, ...]:
    return tuple(["L1", "L2", "L3"] + [f"F{i + 1}" for i in range(n_followers)])

def min_pairwise_distance(pos: np.ndarray) -> float:
    diff = pos[:, None, :] - pos[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    iu = np.triu_indices(len(pos), k=1)
    return float(d[iu].min()) if len(iu[0]) else math.inf

def _nfz_flags(env: Environment, xy: np.ndarray, epsilon: float) -> np.ndarray:
    hit = np.zeros(len(xy), dtype=bool)
    for z in env.nfz:
        hit |= point_rect_distance(xy[:, 0], xy[:, 1], z) < epsilon
    return hit

def _initial_states(desired0: np.ndarray, simcfg: SimConfig, g: float) -> np.ndarray:
    n = len(desired0)
    x = np.zeros((n, STATE_DIM))
    x[:, 0:3] = desired0
    x[:, THRUST] = g
    if simcfg.perturbation > 0:
        rng = np.random.default_rng(simcfg.seed)
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        x[:, 0:3] += d * rng.uniform(0.0, simcfg.perturbation, size=(n, 1))
    return x


class _Recorder:
    def __init__(self, labels, env: Environment, traj: SwarmTrajectory, epsilon: float):
        self.labels = labels
        self.env = env
        self.traj = traj
        self.epsilon = epsilon
        self.rows = {k: [] for k in ("t", "actual", "desired", "min_pairwise", "lead", "nfz", "exp")}

    def add(self, t: float, x: np.ndarray, desired: np.ndarray, t_traj: float):
        pos = x[:, 0:3].copy()
        r = self.rows
        r["t"].append(t)
        r["actual"].append(pos)
        r["desired"].append(desired.copy())
        r["min_pairwise"].append(min_pairwise_distance(pos))
        r["lead"].append(leaders_at(self.traj, t_traj)[0])
        r["nfz"].append(_nfz_flags(self.env, pos[:, :2], self.epsilon))
        r["exp"].append(human_probability_many(self.env, pos[:, :2], t))

    def build(self, complete: bool = True, reason: Optional[str] = None) -> SimLog:
        r = self.rows
        n = len(self.labels)
        if not r["t"]:
            e2 = np.zeros((0, n))
            return SimLog(self.labels, np.zeros(0), np.zeros((0, n, 3)), np.zeros((0, n, 3)), e2,
                          np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0), e2.astype(bool), e2,
                          complete, reason)
        actual = np.stack(r["actual"])
        desired = np.stack(r["desired"])
        lam1, lam2, _ = stretch_eigenvalues(deformation_jacobians(self.traj.initial, np.stack(r["lead"])))
        lam_min = self.traj.lambda_cd_min if self.traj.lambda_cd_min is not None else math.nan
        return SimLog(
            labels=self.labels,
            t=np.asarray(r["t"]),
            actual=actual,
            desired=desired,
            deviation=np.linalg.norm(actual - desired, axis=-1),
            min_pairwise=np.asarray(r["min_pairwise"]),
            lambda1=lam1,
            lambda2=lam2,
            c_col=lam_min - lam1,
            nfz_hit=np.stack(r["nfz"]),
            exposure=np.stack(r["exp"]),
            complete=complete,
            abort_reason=reason,
        )


# -----------------------------------------------------------------------------
# Run
# -----------------------------------------------------------------------------
def run(scenario: "Scenario", plan: LeaderPlan, simcfg: Optional[SimConfig] = None) -> SimLog:
    """Closed-loop run of the whole fleet against `plan`; deterministic for a given seed."""
    simcfg = simcfg or scenario.sim
    params: VehicleParams = scenario.vehicle
    gains: Gains = scenario.gains
    margins: SafetyMargins = scenario.margins
    traj = SwarmTrajectory.build(plan, scenario.followers0, scenario.z_ht,
                                 dt=scenario.planner.dt, lambda_cd_min=margins.lambda_cd_min)
    duration = simcfg.duration if simcfg.duration is not None else traj.horizon
    h = simcfg.step
    n_steps = int(round(duration / h))
    labels = agent_labels(traj.n_followers)
    rec = _Recorder(labels, scenario.environment, traj, margins.epsilon)

    desired = fleet_desired(traj, 0.0)
    x = _initial_states(desired.position, simcfg, params.g)
    logger.info(
        f"▶ sim: {len(labels)} UAVs, horizon={traj.horizon:.1f}s, duration={duration:.1f}s, "
        f"h={h}, decimation={simcfg.record_decimation}, seed={simcfg.seed}"
    )

    k = 0
    try:
        for k in range(n_steps + 1):
            t = k * h
            t_traj = min(t, traj.horizon)
            desired = fleet_desired(traj, t_traj)
            if k % simcfg.record_decimation == 0:
                rec.add(t, x, desired.position, t_traj)
                if DEBUG:
                    dev = np.linalg.norm(x[:, 0:3] - desired.position, axis=1).max()
                    logger.info(f"SIM | t={t:.2f} max_dev={dev:.4f}")
            if k == n_steps:
                break
            u = control_step(x, desired, (0.0, 0.0, 0.0), gains, params)
            x = integrate_step(x, u, h, params)
            if np.any(np.abs(x[:, THETA]) >= GIMBAL_LIMIT):
                bad = int(np.argmax(np.abs(x[:, THETA])))
                raise GimbalLock(f"{labels[bad]} pitch reached {x[bad, THETA]:.3f} rad at t={(k + 1) * h:.2f}s")
    except (NonFiniteState, GimbalLock, ThrustSingularity) as e:
        reason = f"{type(e).__name__} at step {k} (t={k * h:.2f}s): {e}"
        logger.error(f"❌ sim aborted: {reason}")
        raise SimulationAborted(reason, partial_log=rec.build(False, reason), cause=e) from e

    log = rec.build()
    logger.info(f"✅ sim done: {log.n_samples} samples, max deviation {log.deviation.max():.4f} m")
    return log


# -----------------------------------------------------------------------------
# Audit
# -----------------------------------------------------------------------------
def audit(log: SimLog, margins: SafetyMargins, transient: float = 0.0) -> AuditReport:
    if log.n_samples == 0:
        return AuditReport(0.0, margins.delta, True, math.inf, 2 * margins.epsilon, True,
                           -math.inf, True, 0, tuple([0.0] * log.n_agents), tuple([0.0] * log.n_agents),
                           log.complete, transient)
    late = log.t >= transient - 1e-12
    max_dev = float(log.deviation[late].max()) if late.any() else 0.0
    min_pw = float(log.min_pairwise.min())
    c_col = np.nan_to_num(log.c_col, nan=-math.inf)
    max_c = float(c_col.max())

    if log.n_samples > 1:
        dt = np.diff(log.t)[:, None]
        exposure = np.sum(0.5 * (log.exposure[1:] + log.exposure[:-1]) * dt, axis=0)
        travel = np.sum(np.linalg.norm(np.diff(log.actual, axis=0), axis=-1), axis=0)
    else:
        exposure = np.zeros(log.n_agents)
        travel = np.zeros(log.n_agents)

    report = AuditReport(
        max_deviation=max_dev,
        delta=margins.delta,
        deviation_ok=max_dev <= margins.delta,
        min_pairwise=min_pw,
        two_epsilon=2 * margins.epsilon,
        separation_ok=min_pw >= 2 * margins.epsilon,
        max_c_col=max_c,
        c_col_ok=max_c <= COLLISION_TOL,
        nfz_hits=int(np.count_nonzero(log.nfz_hit)),
        exposure=tuple(float(v) for v in exposure),
        travel=tuple(float(v) for v in travel),
        complete=log.complete,
        transient=transient,
    )
    if not report.deviation_ok:
        logger.warning(f"⚠️ tracking hypothesis violated: max deviation {max_dev:.4f} m > δ={margins.delta:.4f} m")
    return report
