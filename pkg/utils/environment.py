# utils/environment.py
# Motion space: bounds, no-fly zones, Pr(Human | r, t) raster + scripted walkers.
from __future__ import annotations

import os
import math
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from utils.errors import OutOfBounds
from utils.geometry import Point2

logger = logging.getLogger(__name__)

# ---------- Tunables (env overrides) ----------
CELL_SIZE      = float(os.getenv("CD_CELL_SIZE", "1.0"))       # m
WALKER_RADIUS  = float(os.getenv("CD_WALKER_RADIUS", "5.0"))   # m
WALKER_PEAK    = float(os.getenv("CD_WALKER_PEAK", "1.0"))


# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class Rect:
    """Axis-aligned, closed."""
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def contains_rect(self, other: "Rect") -> bool:
        return (self.xmin <= other.xmin and other.xmax <= self.xmax
                and self.ymin <= other.ymin and other.ymax <= self.ymax)


@dataclass(frozen=True)
class RiskField:
    origin: Tuple[float, float]
    cell_size: float
    values: np.ndarray          # [row = y index, col = x index], in [0, 1]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def extent(self) -> Rect:
        ny, nx = self.values.shape
        ox, oy = self.origin
        return Rect(ox, oy, ox + (nx - 1) * self.cell_size, oy + (ny - 1) * self.cell_size)

    @classmethod
    def zeros(cls, bounds: Rect, cell_size: float = CELL_SIZE) -> "RiskField":
        nx = int(math.ceil((bounds.xmax - bounds.xmin) / cell_size)) + 1
        ny = int(math.ceil((bounds.ymax - bounds.ymin) / cell_size)) + 1
        return cls((bounds.xmin, bounds.ymin), cell_size, np.zeros((ny, nx)))

    @classmethod
    def from_csv(cls, path: str, origin: Tuple[float, float], cell_size: float = CELL_SIZE) -> "RiskField":
        grid = pd.read_csv(path, header=None).to_numpy(dtype=float)
        return cls(tuple(origin), cell_size, grid)

    @classmethod
    def from_blobs(cls, bounds: Rect, blobs: Sequence[Dict[str, Any]],
                   cell_size: float = CELL_SIZE) -> "RiskField":
        """Gaussian bumps {center_m, sigma_m, peak} summed on the grid, clipped to [0, 1]."""
        base = cls.zeros(bounds, cell_size)
        ny, nx = base.values.shape
        xs = bounds.xmin + cell_size * np.arange(nx)
        ys = bounds.ymin + cell_size * np.arange(ny)
        gx, gy = np.meshgrid(xs, ys)
        acc = np.zeros((ny, nx))
        for b in blobs:
            cx, cy = b["center_m"]
            sigma = float(b.get("sigma_m", 5.0))
            peak = float(b.get("peak", 1.0))
            acc += peak * np.exp(-((gx - cx) ** 2 + (gy - cy) ** 2) / (2.0 * sigma ** 2))
        return cls(base.origin, cell_size, np.clip(acc, 0.0, 1.0))


@dataclass(frozen=True)
class Walker:
    start: Point2
    end: Point2
    speed: float
    radius_of_influence: float = WALKER_RADIUS
    peak_probability: float = WALKER_PEAK


@dataclass(frozen=True)
class Environment:
    bounds: Rect
    nfz: Tuple[Rect, ...] = ()
    risk: Optional[RiskField] = None
    walkers: Tuple[Walker, ...] = ()
    walkers_as_corridors: bool = False

    def planning_view(self) -> "Environment":
        """Walkers become static corridors over their swept segment for the whole mission."""
        if not self.walkers:
            return self
        return replace(self, walkers_as_corridors=True)

    def problems(self) -> List[str]:
        out: List[str] = []
        for k, z in enumerate(self.nfz):
            if not self.bounds.contains_rect(z):
                out.append(f"nfz[{k}] {z} is not inside bounds {self.bounds}")
        if self.risk is not None:
            if not self.risk.extent.contains_rect(self.bounds):
                out.append(f"risk grid {self.risk.extent} does not cover bounds {self.bounds}")
            v = self.risk.values
            if v.size and (np.nanmin(v) < 0.0 or np.nanmax(v) > 1.0 or not np.all(np.isfinite(v))):
                out.append("risk grid values must be finite and within [0, 1]")
        for k, w in enumerate(self.walkers):
            if not w.speed > 0:
                out.append(f"walker[{k}] speed must be > 0")
            if not 0.0 <= w.peak_probability <= 1.0:
                out.append(f"walker[{k}] peak_probability must be in [0, 1]")
            if not w.radius_of_influence > 0:
                out.append(f"walker[{k}] radius_of_influence must be > 0")
        return out


# -----------------------------------------------------------------------------
# Walkers
# -----------------------------------------------------------------------------
def walker_position(w: Walker, t: float) -> Point2:
    dx, dy = w.end.x - w.start.x, w.end.y - w.start.y
    length = math.hypot(dx, dy)
    if length == 0.0:
        return w.start
    s = min(max(t, 0.0) * w.speed, length) / length
    return Point2(w.start.x + s * dx, w.start.y + s * dy)

def _bump(dist: np.ndarray, w: Walker) -> np.ndarray:
    return w.peak_probability * np.clip(1.0 - dist / w.radius_of_influence, 0.0, None)

def _walker_term(w: Walker, xs: np.ndarray, ys: np.ndarray, t: float, corridor: bool) -> np.ndarray:
    if corridor:
        ax, ay, bx, by = w.start.x, w.start.y, w.end.x, w.end.y
        ex, ey = bx - ax, by - ay
        ll = ex * ex + ey * ey
        if ll == 0.0:
            s = np.zeros_like(xs)
        else:
            s = np.clip(((xs - ax) * ex + (ys - ay) * ey) / ll, 0.0, 1.0)
        dist = np.hypot(xs - (ax + s * ex), ys - (ay + s * ey))
    else:
        p = walker_position(w, t)
        dist = np.hypot(xs - p.x, ys - p.y)
    return _bump(dist, w)


# -----------------------------------------------------------------------------
# Pr(Human | r, t)
# -----------------------------------------------------------------------------
def _bilinear(risk: RiskField, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    v = risk.values
    ny, nx = v.shape
    fx = (xs - risk.origin[0]) / risk.cell_size
    fy = (ys - risk.origin[1]) / risk.cell_size
    i0 = np.clip(np.floor(fx).astype(int), 0, max(nx - 2, 0))
    j0 = np.clip(np.floor(fy).astype(int), 0, max(ny - 2, 0))
    i1 = np.minimum(i0 + 1, nx - 1)
    j1 = np.minimum(j0 + 1, ny - 1)
    tx = np.clip(fx - i0, 0.0, 1.0)
    ty = np.clip(fy - j0, 0.0, 1.0)
    return ((1 - tx) * (1 - ty) * v[j0, i0] + tx * (1 - ty) * v[j0, i1]
            + (1 - tx) * ty * v[j1, i0] + tx * ty * v[j1, i1])

def human_probability_many(env: Environment, pts: np.ndarray, t: float) -> np.ndarray:
    """Vectorized Pr over points of shape (..., 2); no bounds check."""
    pts = np.asarray(pts, dtype=float)
    xs, ys = pts[..., 0], pts[..., 1]
    out = _bilinear(env.risk, xs, ys) if env.risk is not None else np.zeros(xs.shape)
    for w in env.walkers:
        out = out + _walker_term(w, xs, ys, t, env.walkers_as_corridors)
    return np.clip(out, 0.0, 1.0)

def human_probability(env: Environment, r: Sequence[float], t: float) -> float:
    x, y = float(r[0]), float(r[1])
    if not env.bounds.contains(x, y):
        raise OutOfBounds(f"({x:.3f}, {y:.3f}) outside motion space {env.bounds}")
    return float(human_probability_many(env, np.array([x, y]), t))

def in_nfz(env: Environment, r: Sequence[float]) -> bool:
    x, y = float(r[0]), float(r[1])
    return any(z.contains(x, y) for z in env.nfz)
