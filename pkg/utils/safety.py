# utils/safety.py
# Collision-avoidance certificate for a continuum deformation and the
# "valid deformation" predicate (rank + stretch + no-fly-zone clearance).
from __future__ import annotations

import os
import math
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from utils.environment import Environment, Rect
from utils.errors import (
    AgentOutsideTriangle,
    DeltaExceedsMax,
    InfeasibleMargins,
    SingularDeformation,
)
from utils.geometry import (
    AREA_EPSILON,
    DET_EPSILON,
    PolarDecomp,
    TriangleConfig,
    barycentric_weights,
    deformation_jacobians,
    polar_decompose,
    signed_areas,
    solve_deformation,
    stretch_eigenvalues,
    triangle_rank_ok,
)

logger = logging.getLogger(__name__)

# ---------- Tunables (env overrides) ----------
COLLISION_TOL = float(os.getenv("CD_COLLISION_TOL", "1e-9"))   # C_Col <= tol is certified
INSIDE_TOL    = float(os.getenv("CD_INSIDE_TOL", "1e-9"))      # barycentric slack for "on the triangle"


@dataclass(frozen=True)
class SafetyMargins:
    epsilon: float
    d_s: float
    d_b: float
    delta: float
    delta_max: float
    lambda_cd_min: float

    @property
    def clearance(self) -> float:
        """Zone / bounds inflation of the leading triangle: ε + δ."""
        return self.epsilon + self.delta

    def problems(self) -> List[str]:
        out: List[str] = []
        if not self.epsilon > 0:
            out.append(f"epsilon must be > 0 (got {self.epsilon})")
        if not self.d_s > 2 * self.epsilon:
            out.append(f"d_s={self.d_s:.4f} must exceed 2·epsilon={2 * self.epsilon:.4f}")
        if not self.d_b > self.epsilon:
            out.append(f"d_b={self.d_b:.4f} must exceed epsilon={self.epsilon:.4f}")
        if not 0.0 <= self.delta <= self.delta_max:
            out.append(f"delta={self.delta:.4f} must lie in [0, delta_max={self.delta_max:.4f}]")
        if not 0.0 < self.lambda_cd_min <= 1.0:
            out.append(f"lambda_cd_min={self.lambda_cd_min:.4f} must lie in (0, 1]")
        return out


# -----------------------------------------------------------------------------
# Distances
# -----------------------------------------------------------------------------
def _point_segment(px, py, ax, ay, bx, by):
    """Broadcasting point-to-segment distance."""
    ex, ey = bx - ax, by - ay
    ll = ex * ex + ey * ey
    safe = np.where(ll > 0, ll, 1.0)
    s = np.clip(((px - ax) * ex + (py - ay) * ey) / safe, 0.0, 1.0)
    s = np.where(ll > 0, s, 0.0)
    return np.hypot(px - (ax + s * ex), py - (ay + s * ey))

def point_rect_distance(px, py, z: Rect):
    dx = np.maximum(np.maximum(z.xmin - px, 0.0), px - z.xmax)
    dy = np.maximum(np.maximum(z.ymin - py, 0.0), py - z.ymax)
    return np.hypot(dx, dy)


# -----------------------------------------------------------------------------
# Margins
# -----------------------------------------------------------------------------
def initial_margins(t0: TriangleConfig, agents0: Sequence[Sequence[float]], epsilon: float,
                    include_leaders: bool = False) -> Tuple[float, float]:
    """
    d_s: min pairwise distance over `agents0`. d_b: min distance of `agents0`
    to the triangle sides.

    Leaders count toward d_s only with include_leaders=True. build_margins
    always passes it: the certificate covers leaders and followers alike.
    """
    pts = np.asarray(agents0, dtype=float).reshape(-1, 2)
    for k, p in enumerate(pts):
        w = barycentric_weights(t0, p)
        if min(w) < -INSIDE_TOL:
            raise AgentOutsideTriangle(f"agent {k} at ({p[0]:.3f}, {p[1]:.3f}) lies outside the leading triangle")

    everyone = np.vstack([pts, t0.as_array()]) if include_leaders else pts
    if len(everyone) < 2:
        raise ValueError("initial_margins needs at least 2 agents")
    diff = everyone[:, None, :] - everyone[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    iu = np.triu_indices(len(everyone), k=1)
    d_s = float(dist[iu].min())

    corners = t0.as_array()
    d_b = math.inf
    for a, b in ((0, 1), (1, 2), (2, 0)):
        if len(pts):
            d = _point_segment(pts[:, 0], pts[:, 1], corners[a, 0], corners[a, 1], corners[b, 0], corners[b, 1])
            d_b = min(d_b, float(d.min()))

    if d_s <= 2 * epsilon:
        logger.warning(f"⚠️ d_s={d_s:.4f} m does not exceed 2ε={2 * epsilon:.4f} m")
    return d_s, d_b

def delta_max(d_s: float, d_b: float, epsilon: float) -> float:
    if not (d_s > 2 * epsilon and d_b > epsilon):
        raise InfeasibleMargins(
            f"no deviation budget: d_s={d_s:.4f}, d_b={d_b:.4f}, epsilon={epsilon:.4f}"
        )
    return min(0.5 * (d_s - 2 * epsilon), d_b - epsilon)

def lambda_cd_min(delta: float, epsilon: float, delta_max_: float) -> float:
    if delta > delta_max_:
        raise DeltaExceedsMax(f"delta={delta:.4f} exceeds delta_max={delta_max_:.4f}")
    if delta < 0:
        raise InfeasibleMargins(f"delta must be >= 0 (got {delta})")
    return (delta + epsilon) / (delta_max_ + epsilon)

def build_margins(t0: TriangleConfig, followers0: Sequence[Sequence[float]],
                  epsilon: float, delta: float) -> SafetyMargins:
    d_s, d_b = initial_margins(t0, followers0, epsilon, include_leaders=True)
    dmax = delta_max(d_s, d_b, epsilon)
    lam = lambda_cd_min(delta, epsilon, dmax)
    m = SafetyMargins(epsilon=epsilon, d_s=d_s, d_b=d_b, delta=delta, delta_max=dmax, lambda_cd_min=lam)
    logger.info(
        f"ℹ️ margins: d_s={d_s:.3f} d_b={d_b:.3f} δ_max={dmax:.3f} δ={delta:.3f} λ_CD,min={lam:.4f}"
    )
    return m


# -----------------------------------------------------------------------------
# Certificates
# -----------------------------------------------------------------------------
def collision_constraint(pd: PolarDecomp, lambda_cd_min_: float) -> float:
    return lambda_cd_min_ - pd.lambda1

def _tri_rect_distance(tris: np.ndarray, z: Rect) -> np.ndarray:
    """Exact distance between filled triangles (K, 3, 2) and a filled rectangle; 0 when they overlap."""
    xs, ys = tris[..., 0], tris[..., 1]

    # separating-axis test: rectangle axes, then triangle edge normals
    separated = (xs.max(-1) < z.xmin) | (xs.min(-1) > z.xmax) | (ys.max(-1) < z.ymin) | (ys.min(-1) > z.ymax)
    rc = np.array([[z.xmin, z.ymin], [z.xmax, z.ymin], [z.xmax, z.ymax], [z.xmin, z.ymax]])
    for a, b in ((0, 1), (1, 2), (2, 0)):
        nx = -(tris[:, b, 1] - tris[:, a, 1])
        ny = tris[:, b, 0] - tris[:, a, 0]
        tri_proj = xs * nx[:, None] + ys * ny[:, None]
        rect_proj = rc[None, :, 0] * nx[:, None] + rc[None, :, 1] * ny[:, None]
        separated |= (tri_proj.max(-1) < rect_proj.min(-1)) | (tri_proj.min(-1) > rect_proj.max(-1))

    # disjoint convex polygons: closest pair is vertex-to-edge
    d = point_rect_distance(xs, ys, z).min(-1)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        de = _point_segment(rc[None, :, 0], rc[None, :, 1],
                            tris[:, a, 0:1], tris[:, a, 1:2], tris[:, b, 0:1], tris[:, b, 1:2])
        d = np.minimum(d, de.min(-1))
    return np.where(separated, d, 0.0)

def triangles_clear(tris: np.ndarray, clearance: float, env: Environment) -> np.ndarray:
    """Batched triangle_clear over (K, 3, 2) leader stacks."""
    tris = np.asarray(tris, dtype=float).reshape(-1, 3, 2)
    b = env.bounds
    xs, ys = tris[..., 0], tris[..., 1]
    ok = ((xs.min(-1) - clearance >= b.xmin) & (xs.max(-1) + clearance <= b.xmax)
          & (ys.min(-1) - clearance >= b.ymin) & (ys.max(-1) + clearance <= b.ymax))
    for z in env.nfz:
        if not ok.any():
            break
        ok &= _tri_rect_distance(tris, z) > clearance
    return ok

def triangle_clear(tc: TriangleConfig, epsilon: float, env: Environment) -> bool:
    return bool(triangles_clear(tc.as_array()[None], epsilon, env)[0])

def valid_deformation(t0: TriangleConfig, tc_next: TriangleConfig,
                      margins: SafetyMargins, env: Environment) -> bool:
    if not triangle_rank_ok(tc_next):
        return False
    try:
        pd = polar_decompose(solve_deformation(t0, tc_next))
    except SingularDeformation:
        return False
    if collision_constraint(pd, margins.lambda_cd_min) > COLLISION_TOL:
        return False
    return triangle_clear(tc_next, margins.clearance, env)

def valid_deformations(t0: TriangleConfig, cands: np.ndarray,
                       margins: SafetyMargins, env: Environment) -> np.ndarray:
    """Batched valid_deformation over (K, 3, 2) candidates; same decisions as the scalar form."""
    cands = np.asarray(cands, dtype=float).reshape(-1, 3, 2)
    ok = np.abs(2.0 * signed_areas(cands)) >= AREA_EPSILON
    lam1, _, det = stretch_eigenvalues(deformation_jacobians(t0, cands))
    ok &= det > DET_EPSILON
    ok &= (margins.lambda_cd_min - lam1) <= COLLISION_TOL
    if ok.any():
        idx = np.flatnonzero(ok)
        ok[idx] = triangles_clear(cands[idx], margins.clearance, env)
    return ok


# -----------------------------------------------------------------------------
# Whole-segment certificate
# -----------------------------------------------------------------------------
def segment_certified(t0: TriangleConfig, tc: TriangleConfig, tn: TriangleConfig,
                      lambda_cd_min_: float) -> bool:
    """
    λ1(U_CD(β)) ≥ λ_CD,min for every β in [0, 1] on the straight leader
    segment tc → tn. Q(β) = A + βB is affine in β, so with c = λ_CD,min²
    f(β) = det(Q)² − c·‖Q‖_F² + c² = (σ1² − c)(σ2² − c) is a quartic whose
    minimum over [0, 1] is found from the roots of f'.
    """
    q = deformation_jacobians(t0, np.stack([tc.as_array(), tn.as_array()]))
    a, b = q[0], q[1] - q[0]
    c = lambda_cd_min_ ** 2

    det_p = Polynomial([
        a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0],
        a[0, 0] * b[1, 1] + a[1, 1] * b[0, 0] - a[0, 1] * b[1, 0] - a[1, 0] * b[0, 1],
        b[0, 0] * b[1, 1] - b[0, 1] * b[1, 0],
    ])
    fro_p = Polynomial([np.sum(a * a), 2.0 * np.sum(a * b), np.sum(b * b)])
    f = det_p ** 2 - c * fro_p + c * c

    betas = [0.0, 1.0]
    for root in f.deriv().roots():
        if abs(root.imag) < 1e-12 and 0.0 < root.real < 1.0:
            betas.append(float(root.real))
    for root in det_p.deriv().roots():
        if abs(root.imag) < 1e-12 and 0.0 < root.real < 1.0:
            betas.append(float(root.real))

    qs = np.array([a + s * b for s in betas])
    lam1, _, det = stretch_eigenvalues(qs)
    if np.any(det <= DET_EPSILON):
        return False
    if np.any(lambda_cd_min_ - lam1 > COLLISION_TOL):
        return False
    return bool(min(f(s) for s in betas) >= -COLLISION_TOL)
