# utils/scenario.py
# Scenario JSON -> validated Scenario.
# Field names carry their units (_m, _s, _mps ...). Schema problems and
# domain problems are gathered together and raised as one
# ScenarioValidationError listing every violated invariant.
from __future__ import annotations

import os
import json
import hashlib
import logging
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from utils.control import Gains
from utils.dynamics import GRAVITY, VehicleParams
from utils.environment import CELL_SIZE, WALKER_PEAK, WALKER_RADIUS, Environment, Rect, RiskField, Walker
from utils.errors import ContinuumError, GoalOffGrid, ScenarioParseError, ScenarioValidationError
from utils.geometry import Point2, TriangleConfig, barycentric_weights
from utils.planner import MAX_EXPANSIONS, PlannerConfig, grid_offsets
from utils.safety import INSIDE_TOL, SafetyMargins, build_margins, triangle_clear, valid_deformation
from utils.sim import RECORD_DECIMATION, SIM_STEP, SimConfig

logger = logging.getLogger(__name__)

# ---------- Tunables (env overrides) ----------
DELTA = float(os.getenv("CD_DELTA", "0.1"))   # m, default tracking budget when a scenario omits delta_m

XY = Tuple[float, float]
Box = Tuple[float, float, float, float]


# -----------------------------------------------------------------------------
# File schema
# -----------------------------------------------------------------------------
class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BlobModel(_Strict):
    center_m: XY
    sigma_m: float = Field(5.0, gt=0)
    peak: float = Field(1.0, ge=0, le=1)


class RiskModel(_Strict):
    cell_size_m: float = Field(CELL_SIZE, gt=0)
    origin_m: Optional[XY] = None
    values: Optional[List[List[float]]] = None
    csv_path: Optional[str] = None
    blobs: Optional[List[BlobModel]] = None


class WalkerModel(_Strict):
    start_m: XY
    end_m: XY
    speed_mps: float
    radius_of_influence_m: float = WALKER_RADIUS
    peak_probability: float = WALKER_PEAK


class EnvironmentModel(_Strict):
    bounds_m: Box
    no_fly_zones_m: List[Box] = []
    risk: Optional[RiskModel] = None
    walkers: List[WalkerModel] = []


class PlannerModel(_Strict):
    dp_x_m: float
    dp_y_m: float
    dt_s: float
    zeta_s: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    zeta_h: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    max_expansions: int = MAX_EXPANSIONS
    heuristic_mode: Literal["rss", "sum"] = "rss"
    risk_mode: Literal["difference", "exposure"] = "difference"
    interval_check: bool = False


class GainsModel(_Strict):
    gamma1: float = 2.0
    gamma2: float = 1.0
    k_t: Optional[float] = None
    k_t_rate: Optional[float] = None
    k_phi: Optional[float] = None
    k_phi_rate: Optional[float] = None
    k_theta: Optional[float] = None
    k_theta_rate: Optional[float] = None
    k_psi: Optional[float] = None
    k_psi_rate: Optional[float] = None


class VehicleModel(_Strict):
    g_mps2: float = GRAVITY
    u_limits: Optional[Tuple[float, float, float, float]] = None


class SimModel(_Strict):
    step_s: float = SIM_STEP
    duration_s: Optional[float] = None
    record_decimation: int = RECORD_DECIMATION
    seed: int = 0
    perturbation_m: float = 0.0


class ScenarioModel(_Strict):
    name: str
    description: str = ""
    environment: EnvironmentModel
    leaders_initial_m: List[XY] = Field(min_length=3, max_length=3)
    leaders_goal_m: List[XY] = Field(min_length=3, max_length=3)
    followers_initial_m: Optional[List[XY]] = None
    follower_lattice_denominator: Optional[int] = Field(None, ge=3)
    epsilon_m: float = Field(gt=0)
    delta_m: float = Field(DELTA, ge=0)
    z_ht_m: float
    planner: PlannerModel
    gains: GainsModel = GainsModel()
    vehicle: VehicleModel = VehicleModel()
    sim: SimModel = SimModel()


# -----------------------------------------------------------------------------
# Domain object
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class Scenario:
    name: str
    environment: Environment
    initial: TriangleConfig
    goal: TriangleConfig
    followers0: np.ndarray          # (N, 2)
    epsilon: float
    delta: float
    z_ht: float
    planner: PlannerConfig
    gains: Gains
    vehicle: VehicleParams
    sim: SimConfig
    margins: SafetyMargins
    digest: str = ""
    description: str = ""

    @property
    def n_agents(self) -> int:
        return 3 + len(self.followers0)

    def with_sim(self, **changes) -> "Scenario":
        return replace(self, sim=replace(self.sim, **changes))


def lattice_followers(t0: TriangleConfig, denominator: int) -> np.ndarray:
    """Interior barycentric lattice: weights (i, j, k)/n with i, j, k >= 1."""
    n = denominator
    pts = t0.as_array()
    rows = []
    for i in range(n - 2, 0, -1):
        for j in range(1, n - i):
            k = n - i - j
            rows.append((i * pts[0] + j * pts[1] + k * pts[2]) / n)
    return np.array(rows, dtype=float).reshape(-1, 2)


# -----------------------------------------------------------------------------
# Build + validate
# -----------------------------------------------------------------------------
def _risk_field(m: Optional[RiskModel], bounds: Rect, base_dir: str, problems: List[str]) -> Optional[RiskField]:
    if m is None:
        return None
    sources = [s for s in (m.values, m.csv_path, m.blobs) if s is not None]
    if len(sources) != 1:
        problems.append("environment.risk needs exactly one of values, csv_path, blobs")
        return None
    origin = tuple(m.origin_m) if m.origin_m is not None else (bounds.xmin, bounds.ymin)
    try:
        if m.values is not None:
            return RiskField(origin, m.cell_size_m, np.asarray(m.values, dtype=float))
        if m.csv_path is not None:
            path = m.csv_path if os.path.isabs(m.csv_path) else os.path.join(base_dir, m.csv_path)
            return RiskField.from_csv(path, origin, m.cell_size_m)
        return RiskField.from_blobs(bounds, [b.model_dump() for b in m.blobs], m.cell_size_m)
    except Exception as e:
        problems.append(f"environment.risk could not be built: {e}")
        return None

def _gains(m: GainsModel) -> Gains:
    base = Gains.critically_damped(m.gamma1, m.gamma2)
    overrides = {k: v for k, v in m.model_dump().items() if v is not None and k not in ("gamma1", "gamma2")}
    return replace(base, **overrides)

def build_scenario(m: ScenarioModel, base_dir: str = ".", digest: str = "") -> Scenario:
    problems: List[str] = []
    em = m.environment
    b = Rect(*em.bounds_m)
    if not (b.xmax > b.xmin and b.ymax > b.ymin):
        problems.append(f"environment.bounds_m {em.bounds_m} is empty")
    env = Environment(
        bounds=b,
        nfz=tuple(Rect(*z) for z in em.no_fly_zones_m),
        risk=_risk_field(em.risk, b, base_dir, problems),
        walkers=tuple(Walker(Point2(*w.start_m), Point2(*w.end_m), w.speed_mps,
                             w.radius_of_influence_m, w.peak_probability) for w in em.walkers),
    )
    problems += env.problems()

    t0 = TriangleConfig.from_points(m.leaders_initial_m)
    goal = TriangleConfig.from_points(m.leaders_goal_m)

    if (m.followers_initial_m is None) == (m.follower_lattice_denominator is None):
        problems.append("give exactly one of followers_initial_m, follower_lattice_denominator")
        followers = np.zeros((0, 2))
    elif m.followers_initial_m is not None:
        followers = np.asarray(m.followers_initial_m, dtype=float).reshape(-1, 2)
    else:
        followers = lattice_followers(t0, m.follower_lattice_denominator)

    pcfg = PlannerConfig(
        dp_x=m.planner.dp_x_m, dp_y=m.planner.dp_y_m, dt=m.planner.dt_s,
        zeta_s=tuple(m.planner.zeta_s), zeta_h=tuple(m.planner.zeta_h),
        max_expansions=m.planner.max_expansions, heuristic_mode=m.planner.heuristic_mode,
        risk_mode=m.planner.risk_mode, interval_check=m.planner.interval_check,
    )
    problems += pcfg.problems()
    gains = _gains(m.gains)
    problems += gains.problems()
    vehicle = VehicleParams(g=m.vehicle.g_mps2, u_limits=m.vehicle.u_limits)
    problems += vehicle.problems()
    sim = SimConfig(step=m.sim.step_s, duration=m.sim.duration_s, record_decimation=m.sim.record_decimation,
                    seed=m.sim.seed, perturbation=m.sim.perturbation_m)
    problems += sim.problems(segment_dt=m.planner.dt_s, delta=m.delta_m)

    for k, p in enumerate(followers):
        try:
            if min(barycentric_weights(t0, p)) < -INSIDE_TOL:
                problems.append(f"follower {k} at ({p[0]:.3f}, {p[1]:.3f}) is outside the initial leading triangle")
        except ContinuumError as e:
            problems.append(f"leaders_initial_m: {e}")
            break

    margins: Optional[SafetyMargins] = None
    if not problems:
        try:
            margins = build_margins(t0, followers, m.epsilon_m, m.delta_m)
        except ContinuumError as e:
            problems.append(f"safety margins: {e}")

    if margins is not None and pcfg.dp_x > 0 and pcfg.dp_y > 0:
        plan_env = env.planning_view()
        try:
            grid_offsets(t0, goal, pcfg)
        except GoalOffGrid as e:
            problems.append(f"leaders_goal_m: {e}")
        if not triangle_clear(t0, margins.clearance, plan_env):
            problems.append(f"initial leading triangle is not clear of bounds / no-fly zones by ε+δ={margins.clearance:.3f} m")
        if not valid_deformation(t0, goal, margins, plan_env):
            problems.append("goal leading triangle is not a valid deformation of the initial one")

    if problems:
        for p in problems:
            logger.error(f"❌ scenario {m.name}: {p}")
        raise ScenarioValidationError(problems)

    return Scenario(
        name=m.name, environment=env, initial=t0, goal=goal, followers0=followers,
        epsilon=m.epsilon_m, delta=m.delta_m, z_ht=m.z_ht_m, planner=pcfg, gains=gains,
        vehicle=vehicle, sim=sim, margins=margins, digest=digest, description=m.description,
    )

def scenario_from_dict(data: Dict[str, Any], base_dir: str = ".", digest: str = "") -> Scenario:
    try:
        model = ScenarioModel.model_validate(data)
    except ValidationError as e:
        raise ScenarioValidationError(
            [f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()]
        ) from e
    return build_scenario(model, base_dir, digest)

def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "rb") as f:
            raw = f.read()
        data = json.loads(raw.decode("utf-8"))
    except FileNotFoundError as e:
        raise ScenarioParseError(f"scenario file not found: {path}") from e
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ScenarioParseError(f"scenario {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ScenarioParseError(f"scenario {path} must hold a JSON object")
    digest = hashlib.sha256(raw).hexdigest()[:16]
    sc = scenario_from_dict(data, os.path.dirname(os.path.abspath(path)), digest)
    logger.info(f"✅ loaded scenario {sc.name}: {sc.n_agents} UAVs, digest={digest}")
    return sc
