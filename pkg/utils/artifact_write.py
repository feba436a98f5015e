# utils/artifact_write.py
# -*- coding: utf-8 -*-
# Plan JSON, SimLog CSVs and audit JSON on disk.
# Writers return (written_count, reason) and log failures instead of raising.
#
# sim_agents.csv  : t_s, uav, x_m, y_m, z_m, xd_m, yd_m, zd_m, deviation_m, nfz_hit, pr_human
#                   one row per recorded sample per UAV, samples ascending, UAVs L1 L2 L3 F1 ..
# sim_fleet.csv   : t_s, min_pairwise_m, lambda1, lambda2, c_col, nfz_hits
import os
import json
import logging
from dataclasses import asdict
from datetime import datetime, timezone
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from utils.errors import ScenarioParseError, ScenarioValidationError
from utils.geometry import TriangleConfig
from utils.planner import LeaderPlan
from utils.sim import AuditReport, SimLog

log = logging.getLogger(__name__)

# ---- Config (overridable via env) -------------------------------------------
PLAN_FILE   = os.getenv("CD_PLAN_FILE", "plan.json")
AGENTS_CSV  = os.getenv("CD_AGENTS_CSV", "sim_agents.csv")
FLEET_CSV   = os.getenv("CD_FLEET_CSV", "sim_fleet.csv")
AUDIT_FILE  = os.getenv("CD_AUDIT_FILE", "audit.json")

AGENT_COLUMNS = ["t_s", "uav", "x_m", "y_m", "z_m", "xd_m", "yd_m", "zd_m", "deviation_m", "nfz_hit", "pr_human"]
FLEET_COLUMNS = ["t_s", "min_pairwise_m", "lambda1", "lambda2", "c_col", "nfz_hits"]


# ---- Plan file schema -------------------------------------------------------
class WaypointModel(BaseModel):
    t_s: float
    leaders_m: List[Tuple[float, float]] = Field(min_length=3, max_length=3)
    g_cost: float


class PlanFileModel(BaseModel):
    scenario: str
    scenario_digest: str = ""
    dt_s: float
    cost: float
    expansions: int = 0
    created_at: str = ""
    waypoints: List[WaypointModel] = Field(min_length=1)


# ---- Helpers ----------------------------------------------------------------
def _now_iso():
    return datetime.now(timezone.utc).isoformat()

def _ensure_dir(path: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)


# ---- Plans ------------------------------------------------------------------
def plan_to_dict(plan: LeaderPlan, scenario_name: str, digest: str = "", dt: Optional[float] = None) -> dict:
    return PlanFileModel(
        scenario=scenario_name,
        scenario_digest=digest,
        dt_s=float(dt if dt is not None else plan.dt),
        cost=float(plan.cost),
        expansions=int(plan.expansions),
        created_at=_now_iso(),
        waypoints=[
            WaypointModel(t_s=t, leaders_m=[(p.x, p.y) for p in wp], g_cost=g)
            for wp, t, g in zip(plan.waypoints, plan.times, plan.costs)
        ],
    ).model_dump()

def write_plan(path: str, plan: LeaderPlan, scenario_name: str, digest: str = "",
               dt: Optional[float] = None) -> Tuple[int, str]:
    """
    Returns: (written_count, reason)
    - written_count is the number of waypoints on disk
    """
    try:
        if not plan.waypoints:
            return 0, "EMPTY_PLAN"
        _ensure_dir(path)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(plan_to_dict(plan, scenario_name, digest, dt), f, indent=2)
        return len(plan.waypoints), "OK"
    except Exception as e:
        log.exception("write_plan failed: %s", e)
        return 0, "EXCEPTION"

def read_plan(path: str) -> Tuple[LeaderPlan, PlanFileModel]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ScenarioParseError(f"plan file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ScenarioParseError(f"plan {path} is not valid JSON: {e}") from e
    try:
        m = PlanFileModel.model_validate(data)
    except ValidationError as e:
        raise ScenarioValidationError(
            [f"plan.{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]
        ) from e
    plan = LeaderPlan(
        waypoints=tuple(TriangleConfig.from_points(w.leaders_m) for w in m.waypoints),
        times=tuple(w.t_s for w in m.waypoints),
        costs=tuple(w.g_cost for w in m.waypoints),
        expansions=m.expansions,
    )
    return plan, m


# ---- Sim logs ---------------------------------------------------------------
def log_frames(simlog: SimLog) -> Tuple[pd.DataFrame, pd.DataFrame]:
    s, n = simlog.n_samples, simlog.n_agents
    agents = pd.DataFrame({
        "t_s": np.repeat(simlog.t, n),
        "uav": np.tile(np.asarray(simlog.labels, dtype=object), s),
        "x_m": simlog.actual[..., 0].reshape(-1),
        "y_m": simlog.actual[..., 1].reshape(-1),
        "z_m": simlog.actual[..., 2].reshape(-1),
        "xd_m": simlog.desired[..., 0].reshape(-1),
        "yd_m": simlog.desired[..., 1].reshape(-1),
        "zd_m": simlog.desired[..., 2].reshape(-1),
        "deviation_m": simlog.deviation.reshape(-1),
        "nfz_hit": simlog.nfz_hit.reshape(-1).astype(int),
        "pr_human": simlog.exposure.reshape(-1),
    }, columns=AGENT_COLUMNS)
    fleet = pd.DataFrame({
        "t_s": simlog.t,
        "min_pairwise_m": simlog.min_pairwise,
        "lambda1": simlog.lambda1,
        "lambda2": simlog.lambda2,
        "c_col": simlog.c_col,
        "nfz_hits": simlog.nfz_hit.sum(axis=1).astype(int) if s else np.zeros(0, dtype=int),
    }, columns=FLEET_COLUMNS)
    return agents, fleet

def write_sim_log(out_dir: str, simlog: SimLog) -> Tuple[int, str]:
    """Returns: (rows_written_to_agents_csv, reason)"""
    try:
        os.makedirs(out_dir, exist_ok=True)
        agents, fleet = log_frames(simlog)
        agents.to_csv(os.path.join(out_dir, AGENTS_CSV), index=False)
        fleet.to_csv(os.path.join(out_dir, FLEET_CSV), index=False)
        reason = "OK" if simlog.complete else f"PARTIAL:{simlog.abort_reason}"
        return len(agents), reason
    except Exception as e:
        log.exception("write_sim_log failed: %s", e)
        return 0, "EXCEPTION"

def read_sim_log(out_dir: str) -> Optional[SimLog]:
    """SimLog back from the two CSVs; None when they are missing."""
    ap, fp = os.path.join(out_dir, AGENTS_CSV), os.path.join(out_dir, FLEET_CSV)
    if not (os.path.exists(ap) and os.path.exists(fp)):
        return None
    agents = pd.read_csv(ap)
    fleet = pd.read_csv(fp)
    s = len(fleet)
    labels = tuple(agents["uav"].iloc[: len(agents) // max(s, 1)].astype(str))
    n = len(labels)
    grab = lambda cols: agents[cols].to_numpy(dtype=float).reshape(s, n, len(cols))
    return SimLog(
        labels=labels,
        t=fleet["t_s"].to_numpy(dtype=float),
        actual=grab(["x_m", "y_m", "z_m"]),
        desired=grab(["xd_m", "yd_m", "zd_m"]),
        deviation=agents["deviation_m"].to_numpy(dtype=float).reshape(s, n),
        min_pairwise=fleet["min_pairwise_m"].to_numpy(dtype=float),
        lambda1=fleet["lambda1"].to_numpy(dtype=float),
        lambda2=fleet["lambda2"].to_numpy(dtype=float),
        c_col=fleet["c_col"].to_numpy(dtype=float),
        nfz_hit=agents["nfz_hit"].to_numpy().reshape(s, n).astype(bool),
        exposure=agents["pr_human"].to_numpy(dtype=float).reshape(s, n),
    )


# ---- Audit ------------------------------------------------------------------
def write_audit(out_dir: str, report: AuditReport) -> Tuple[int, str]:
    try:
        os.makedirs(out_dir, exist_ok=True)
        row = asdict(report)
        row["passed"] = report.passed
        row["created_at"] = _now_iso()
        with open(os.path.join(out_dir, AUDIT_FILE), "w", encoding="utf-8") as f:
            json.dump(row, f, indent=2, default=float)
        return 1, "OK" if report.passed else "AUDIT_FAILED"
    except Exception as e:
        log.exception("write_audit failed: %s", e)
        return 0, "EXCEPTION"
