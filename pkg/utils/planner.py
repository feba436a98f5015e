# utils/planner.py
# A* over leading-triangle configurations on a uniform X-Y lattice.
# - successor rule: every leader moves by h_q·Δp_q, h_q ∈ {-1, 0, 1}
# - F = G + H; G accumulates travel + human-presence stage costs
# - only valid deformations (rank, stretch certificate, zone clearance) are admitted
from __future__ import annotations

import os
import math
import heapq
import logging
import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.environment import Environment, human_probability_many
from utils.errors import BudgetExceeded, GoalOffGrid, NoPath
from utils.geometry import Point2, TriangleConfig
from utils.safety import SafetyMargins, segment_certified, valid_deformation, valid_deformations

logger = logging.getLogger(__name__)
DEBUG = os.getenv("PLANNER_DEBUG", "false").lower() in ("1", "true", "yes", "y")

# ---------- Tunables (env overrides) ----------
MAX_EXPANSIONS = int(os.getenv("CD_MAX_EXPANSIONS", "200000"))
GRID_TOL       = float(os.getenv("CD_GRID_TOL", "1e-9"))

HEURISTICS = ("rss", "sum")
RISK_MODES = ("difference", "exposure")

# All 9³ per-leader move combinations, in itertools.product order; index 0..728.
_STEPS = (-1, 0, 1)
_ALL_MOVES = np.array(
    [[(hx1, hy1), (hx2, hy2), (hx3, hy3)]
     for hx1, hy1, hx2, hy2, hx3, hy3 in itertools.product(_STEPS, repeat=6)],
    dtype=np.int64,
)
MOVES = _ALL_MOVES[np.any(_ALL_MOVES.reshape(-1, 6) != 0, axis=1)]   # 728, identity move excluded


# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class PlannerConfig:
    dp_x: float
    dp_y: float
    dt: float
    zeta_s: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    zeta_h: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    max_expansions: int = MAX_EXPANSIONS
    heuristic_mode: str = "rss"
    risk_mode: str = "difference"
    interval_check: bool = False

    def problems(self) -> List[str]:
        out: List[str] = []
        for name in ("dp_x", "dp_y", "dt"):
            if not getattr(self, name) > 0:
                out.append(f"planner.{name} must be > 0")
        if len(self.zeta_s) != 3 or any(z < 1.0 for z in self.zeta_s):
            out.append("planner.zeta_s needs 3 weights, each >= 1 (keeps the heuristic admissible)")
        if len(self.zeta_h) != 3 or any(z < 0.0 for z in self.zeta_h):
            out.append("planner.zeta_h needs 3 weights, each >= 0")
        if self.max_expansions < 1:
            out.append("planner.max_expansions must be >= 1")
        if self.heuristic_mode not in HEURISTICS:
            out.append(f"planner.heuristic_mode must be one of {HEURISTICS}")
        if self.risk_mode not in RISK_MODES:
            out.append(f"planner.risk_mode must be one of {RISK_MODES}")
        return out


@dataclass
class PlanNode:
    config: TriangleConfig
    time_index: int
    g: float = 0.0
    h: float = 0.0
    parent: Optional["PlanNode"] = field(default=None, repr=False)

    @property
    def f(self) -> float:
        return self.g + self.h


@dataclass(frozen=True)
class LeaderPlan:
    waypoints: Tuple[TriangleConfig, ...]
    times: Tuple[float, ...]
    costs: Tuple[float, ...]          # cumulative G at each waypoint
    expansions: int = 0

    @property
    def cost(self) -> float:
        return self.costs[-1] if self.costs else 0.0

    @property
    def dt(self) -> float:
        return self.times[1] - self.times[0] if len(self.times) > 1 else 0.0

    @property
    def horizon(self) -> float:
        return self.times[-1] if self.times else 0.0

    @property
    def n_segments(self) -> int:
        return max(len(self.waypoints) - 1, 0)


# -----------------------------------------------------------------------------
# Costs
# -----------------------------------------------------------------------------
def heuristic(config: TriangleConfig, goal: TriangleConfig, mode: str = "rss") -> float:
    d = config.as_array() - goal.as_array()
    per_leader = np.hypot(d[:, 0], d[:, 1])
    if mode == "sum":
        return float(per_leader.sum())
    return float(math.sqrt(float(np.sum(per_leader ** 2))))

def _heuristic_many(pos: np.ndarray, goal: np.ndarray, mode: str) -> np.ndarray:
    d = pos - goal[None]
    per_leader = np.hypot(d[..., 0], d[..., 1])
    if mode == "sum":
        return per_leader.sum(-1)
    return np.sqrt(np.sum(per_leader ** 2, axis=-1))

def _stage_costs(cur: np.ndarray, nxt: np.ndarray, t_c: float, t_n: float,
                 pcfg: PlannerConfig, env: Environment) -> np.ndarray:
    """Stage cost from one current configuration (3, 2) to candidates (K, 3, 2)."""
    zs = np.asarray(pcfg.zeta_s, dtype=float)
    zh = np.asarray(pcfg.zeta_h, dtype=float)
    d = nxt - cur[None]
    travel = np.hypot(d[..., 0], d[..., 1]) @ zs
    if not np.any(zh):
        return travel
    pr_c = human_probability_many(env, cur, t_c)
    pr_n = human_probability_many(env, nxt, t_n)
    if pcfg.risk_mode == "exposure":
        risk = (0.5 * (pr_n + pr_c[None])) @ zh
    else:
        risk = np.abs(pr_n - pr_c[None]) @ zh
    return travel + risk

def stage_cost(current: PlanNode, next_: PlanNode, pcfg: PlannerConfig, env: Environment) -> float:
    t_c = current.time_index * pcfg.dt
    t_n = next_.time_index * pcfg.dt
    return float(_stage_costs(current.config.as_array(), next_.config.as_array()[None],
                              t_c, t_n, pcfg, env)[0])


# -----------------------------------------------------------------------------
# Successors
# -----------------------------------------------------------------------------
def _steps(pcfg: PlannerConfig) -> np.ndarray:
    return np.array([pcfg.dp_x, pcfg.dp_y], dtype=float)

def _candidates(cur: np.ndarray, pcfg: PlannerConfig) -> np.ndarray:
    return cur[None] + MOVES * _steps(pcfg)

def _root(node: PlanNode) -> PlanNode:
    while node.parent is not None:
        node = node.parent
    return node

def _to_config(arr: np.ndarray) -> TriangleConfig:
    return TriangleConfig(*(Point2(float(a[0]), float(a[1])) for a in arr))

def _filter(t0: TriangleConfig, cur_cfg: TriangleConfig, cands: np.ndarray,
            pcfg: PlannerConfig, margins: SafetyMargins, env: Environment) -> np.ndarray:
    ok = valid_deformations(t0, cands, margins, env)
    if pcfg.interval_check and ok.any():
        for k in np.flatnonzero(ok):
            if not segment_certified(t0, cur_cfg, _to_config(cands[k]), margins.lambda_cd_min):
                ok[k] = False
    return ok

def successors(node: PlanNode, pcfg: PlannerConfig, margins: SafetyMargins, env: Environment,
               t0: Optional[TriangleConfig] = None,
               goal: Optional[TriangleConfig] = None) -> List[PlanNode]:
    """
    Valid successors of `node` in MOVES order. `t0` defaults to the root of the
    node's parent chain; h is filled in when `goal` is given.
    """
    t0 = t0 or _root(node).config
    cur = node.config.as_array()
    cands = _candidates(cur, pcfg)
    ok = _filter(t0, node.config, cands, pcfg, margins, env)
    keep = cands[ok]
    if not len(keep):
        return []
    tc = node.time_index * pcfg.dt
    tn = (node.time_index + 1) * pcfg.dt
    g = node.g + _stage_costs(cur, keep, tc, tn, pcfg, env)
    h = (_heuristic_many(keep, goal.as_array(), pcfg.heuristic_mode)
         if goal is not None else np.zeros(len(keep)))
    return [PlanNode(_to_config(keep[k]), node.time_index + 1, float(g[k]), float(h[k]), node)
            for k in range(len(keep))]


# -----------------------------------------------------------------------------
# Search
# -----------------------------------------------------------------------------
def grid_offsets(initial: TriangleConfig, goal: TriangleConfig, pcfg: PlannerConfig) -> np.ndarray:
    off = (goal.as_array() - initial.as_array()) / _steps(pcfg)
    rounded = np.round(off)
    if np.any(np.abs(off - rounded) > GRID_TOL):
        raise GoalOffGrid(
            f"goal leaders are not reachable on the Δp=({pcfg.dp_x}, {pcfg.dp_y}) lattice: offsets {off.tolist()}"
        )
    return rounded.astype(np.int64)

def _extract(node: PlanNode, pcfg: PlannerConfig, expansions: int) -> LeaderPlan:
    chain: List[PlanNode] = []
    while node is not None:
        chain.append(node)
        node = node.parent
    chain.reverse()
    return LeaderPlan(
        waypoints=tuple(n.config for n in chain),
        times=tuple(n.time_index * pcfg.dt for n in chain),
        costs=tuple(n.g for n in chain),
        expansions=expansions,
    )

def astar(initial: TriangleConfig, goal: TriangleConfig, pcfg: PlannerConfig,
          margins: SafetyMargins, env: Environment) -> LeaderPlan:
    """
    Optimal leader plan. Nodes are keyed by their integer lattice offsets from
    `initial` (time is not part of the key); walkers are planned against as
    static corridors. Open-list order: f, then h, then lexicographic config.
    """
    env = env.planning_view()
    goal_key = tuple(map(tuple, grid_offsets(initial, goal, pcfg)))
    if not valid_deformation(initial, goal, margins, env):
        raise NoPath("goal configuration is not a valid deformation of the initial configuration")

    base = initial.as_array()
    steps = _steps(pcfg)
    goal_arr = goal.as_array()
    start_key = ((0, 0), (0, 0), (0, 0))
    start = PlanNode(initial, 0, 0.0, heuristic(initial, goal, pcfg.heuristic_mode), None)

    if start_key == goal_key:
        logger.info("ℹ️ goal equals initial configuration; single-node plan")
        return _extract(start, pcfg, 0)

    best_g: Dict[tuple, float] = {start_key: 0.0}
    nodes: Dict[tuple, PlanNode] = {start_key: start}
    closed = set()
    open_heap: List[tuple] = [(start.f, start.h, start.config, start_key)]
    expansions = 0

    while open_heap:
        f, h, cfg, key = heapq.heappop(open_heap)
        if key in closed:
            continue
        node = nodes[key]
        if key == goal_key:
            plan = _extract(node, pcfg, expansions)
            logger.info(f"✅ A* reached goal: cost={plan.cost:.4f} steps={plan.n_segments} expansions={expansions}")
            return plan
        if expansions >= pcfg.max_expansions:
            raise BudgetExceeded(f"A* stopped after {expansions} expansions (max_expansions={pcfg.max_expansions})")
        closed.add(key)
        expansions += 1

        cur_off = np.array(key, dtype=np.int64)
        cand_off = cur_off[None] + MOVES
        cands = base[None] + cand_off * steps
        ok = _filter(initial, node.config, cands, pcfg, margins, env)
        idx = np.flatnonzero(ok)
        if not len(idx):
            continue
        cur = base + cur_off * steps
        g_new = node.g + _stage_costs(cur, cands[idx], node.time_index * pcfg.dt,
                                      (node.time_index + 1) * pcfg.dt, pcfg, env)
        h_new = _heuristic_many(cands[idx], goal_arr, pcfg.heuristic_mode)

        for j, k in enumerate(idx):
            nkey = tuple(map(tuple, cand_off[k].tolist()))
            if nkey in closed:
                continue
            g = float(g_new[j])
            if g < best_g.get(nkey, math.inf):
                best_g[nkey] = g
                child = PlanNode(_to_config(cands[k]), node.time_index + 1, g, float(h_new[j]), node)
                nodes[nkey] = child
                heapq.heappush(open_heap, (child.f, child.h, child.config, nkey))

        if DEBUG and expansions % 1000 == 0:
            logger.info(f"PLANNER | expansions={expansions} open={len(open_heap)} f={f:.4f} h={h:.4f}")

    raise NoPath(f"open set exhausted after {expansions} expansions")
