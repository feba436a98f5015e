# utils/report.py
# Static SVG figures:
#   paths.svg             leader paths over Pr(Human) contours, no-fly zones, start / goal triangles
#   eigenvalues.svg       λ1, λ2 of U_CD vs time with λ_CD,min
#   snapshot_t<sss>.svg   swarm + leading triangle + walkers at fixed times
from __future__ import annotations

import os
import logging
from typing import List, Optional, Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.patches import Polygon, Rectangle
import numpy as np

from utils.environment import Environment, human_probability_many, walker_position
from utils.planner import LeaderPlan
from utils.sim import SimLog
from utils.trajectory import DeformationSample, SwarmTrajectory, fleet_desired, rigid_phase

logger = logging.getLogger(__name__)

# ---------- Tunables (env overrides) ----------
SNAPSHOT_TIMES = tuple(float(t) for t in os.getenv("CD_SNAPSHOT_TIMES", "0,25,50,75,100,125,150,175,200").split(","))
CONTOUR_CELL   = float(os.getenv("CD_CONTOUR_CELL", "0.5"))   # m

LEADER_COLORS = ["#0072B2", "#D55E00", "#009E73"]
FOLLOWER_COLOR = "#555555"
NFZ_COLOR = "#CC79A7"


def _risk_grid(env: Environment, t: float):
    b = env.bounds
    xs = np.arange(b.xmin, b.xmax + 1e-9, CONTOUR_CELL)
    ys = np.arange(b.ymin, b.ymax + 1e-9, CONTOUR_CELL)
    gx, gy = np.meshgrid(xs, ys)
    pr = human_probability_many(env, np.stack([gx, gy], axis=-1), t)
    return gx, gy, pr

def _base_axes(env: Environment, t: float, title: str):
    fig, ax = plt.subplots(figsize=(7.0, 4.8))
    gx, gy, pr = _risk_grid(env, t)
    if np.any(pr > 0):
        cs = ax.contourf(gx, gy, pr, levels=np.linspace(0.0, 1.0, 11), cmap="Greys", alpha=0.6)
        fig.colorbar(cs, ax=ax, label="Pr(Human)")
    for z in env.nfz:
        ax.add_patch(Rectangle((z.xmin, z.ymin), z.xmax - z.xmin, z.ymax - z.ymin,
                               facecolor=NFZ_COLOR, alpha=0.5, edgecolor=NFZ_COLOR, label="no-fly zone"))
    b = env.bounds
    ax.set_xlim(b.xmin, b.xmax)
    ax.set_ylim(b.ymin, b.ymax)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(title)
    return fig, ax

def _save(fig, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)
    return path


# -----------------------------------------------------------------------------
# Figures
# -----------------------------------------------------------------------------
def plot_paths(env: Environment, plan: LeaderPlan, path: str, title: str = "Leader paths") -> str:
    fig, ax = _base_axes(env.planning_view(), 0.0, title)
    wp = np.stack([w.as_array() for w in plan.waypoints])
    for l in range(3):
        ax.plot(wp[:, l, 0], wp[:, l, 1], "-o", ms=3, color=LEADER_COLORS[l], label=f"leader {l + 1}")
    for k, ls in ((0, "-"), (len(wp) - 1, "--")):
        ax.add_patch(Polygon(wp[k], closed=True, fill=False, ls=ls, edgecolor="black"))
    handles, labels = ax.get_legend_handles_labels()
    uniq = dict(zip(labels, handles))
    ax.legend(uniq.values(), uniq.keys(), loc="best", fontsize=7)
    return _save(fig, path)

def plot_eigenvalues(series: Sequence[DeformationSample], path: str,
                     lambda_cd_min: Optional[float] = None, tol: float = 1e-6) -> str:
    t = np.array([s.t for s in series])
    fig, ax = plt.subplots(figsize=(7.0, 3.2))
    ax.plot(t, [s.lambda1 for s in series], label="λ1")
    ax.plot(t, [s.lambda2 for s in series], label="λ2")
    if lambda_cd_min is not None:
        ax.axhline(lambda_cd_min, color="#E69F00", ls=":", label="λ_CD,min")
    rigid = rigid_phase(series, tol)
    if rigid > 0:
        ax.axvspan(0.0, rigid, color="#56B4E9", alpha=0.15, label=f"rigid ({rigid:.1f} s)")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("eigenvalues of U_CD")
    ax.grid(True, alpha=0.4)
    ax.legend(loc="best", fontsize=7)
    return _save(fig, path)

def plot_snapshot(env: Environment, traj: SwarmTrajectory, t: float, path: str,
                  simlog: Optional[SimLog] = None) -> str:
    t_traj = min(t, traj.horizon)
    fig, ax = _base_axes(env, t, f"t = {t:.0f} s")
    pos = fleet_desired(traj, t_traj).position
    ax.add_patch(Polygon(pos[:3, :2], closed=True, fill=False, edgecolor="black"))
    ax.scatter(pos[3:, 0], pos[3:, 1], s=10, color=FOLLOWER_COLOR, label="followers (desired)")
    for l in range(3):
        ax.scatter(pos[l, 0], pos[l, 1], s=25, color=LEADER_COLORS[l], label=f"leader {l + 1}")
    if simlog is not None and simlog.n_samples:
        k = int(np.argmin(np.abs(simlog.t - t)))
        ax.scatter(simlog.actual[k, :, 0], simlog.actual[k, :, 1], s=4, marker="x", color="red", label="actual")
    for w in env.walkers:
        p = walker_position(w, t)
        ax.scatter(p.x, p.y, s=60, marker="*", color="black", label="walker")
    ax.legend(loc="upper right", fontsize=6)
    return _save(fig, path)

def snapshot_paths(env: Environment, traj: SwarmTrajectory, out_dir: str,
                   times: Sequence[float] = SNAPSHOT_TIMES, simlog: Optional[SimLog] = None) -> List[str]:
    return [plot_snapshot(env, traj, t, os.path.join(out_dir, f"snapshot_t{int(round(t)):03d}.svg"), simlog)
            for t in times]
