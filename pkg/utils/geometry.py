# utils/geometry.py
# Homogeneous (affine) map of the leading triangle:
# - solve Q_CD, D from initial / current leader positions
# - apply the map, polar-decompose Q_CD, barycentric follower weights
from __future__ import annotations

import os
import math
import logging
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence, Tuple

import numpy as np

from utils.errors import DegenerateBasis, SingularDeformation

logger = logging.getLogger(__name__)

# ---------- Tunables (env overrides) ----------
AREA_EPSILON = float(os.getenv("CD_AREA_EPSILON", "1e-6"))   # m², rank test
DET_EPSILON  = float(os.getenv("CD_DET_EPSILON", "1e-12"))   # det(Q_CD) floor
ORTHO_TOL    = float(os.getenv("CD_ORTHO_TOL", "1e-9"))


# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------
class Point2(NamedTuple):
    x: float
    y: float


class TriangleConfig(NamedTuple):
    """Leaders 1, 2, 3. Tuple ordering doubles as the planner's lexicographic tie-break."""
    p1: Point2
    p2: Point2
    p3: Point2

    @classmethod
    def from_points(cls, pts: Iterable[Sequence[float]]) -> "TriangleConfig":
        p = [Point2(float(a[0]), float(a[1])) for a in pts]
        if len(p) != 3:
            raise ValueError(f"a triangle needs 3 leader positions, got {len(p)}")
        return cls(p[0], p[1], p[2])

    def as_array(self) -> np.ndarray:
        return np.array([[self.p1.x, self.p1.y],
                         [self.p2.x, self.p2.y],
                         [self.p3.x, self.p3.y]], dtype=float)

    def translated(self, dx: float, dy: float) -> "TriangleConfig":
        return TriangleConfig(*(Point2(p.x + dx, p.y + dy) for p in self))


@dataclass(frozen=True)
class DeformationParams:
    q11: float
    q12: float
    q21: float
    q22: float
    d1: float
    d2: float

    @property
    def q(self) -> np.ndarray:
        return np.array([[self.q11, self.q12], [self.q21, self.q22]], dtype=float)

    @property
    def d(self) -> np.ndarray:
        return np.array([self.d1, self.d2], dtype=float)

    @property
    def det(self) -> float:
        return self.q11 * self.q22 - self.q12 * self.q21

    @classmethod
    def from_arrays(cls, q: np.ndarray, d: Sequence[float]) -> "DeformationParams":
        return cls(float(q[0, 0]), float(q[0, 1]), float(q[1, 0]), float(q[1, 1]),
                   float(d[0]), float(d[1]))

    @classmethod
    def identity(cls) -> "DeformationParams":
        return cls(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)


@dataclass(frozen=True)
class PolarDecomp:
    r_cd: np.ndarray       # 2x2 rotation
    u_cd: np.ndarray       # 2x2 symmetric positive definite
    lambda1: float
    lambda2: float


class BarycentricWeights(NamedTuple):
    a1: float
    a2: float
    a3: float


# -----------------------------------------------------------------------------
# Helpers
# -----------------------------------------------------------------------------
def _edges(tc: TriangleConfig) -> Tuple[float, float, float, float]:
    """Columns p2-p1 and p3-p1 as (e11, e21, e12, e22)."""
    return (tc.p2.x - tc.p1.x, tc.p2.y - tc.p1.y,
            tc.p3.x - tc.p1.x, tc.p3.y - tc.p1.y)

def signed_area(tc: TriangleConfig) -> float:
    e11, e21, e12, e22 = _edges(tc)
    return 0.5 * (e11 * e22 - e12 * e21)

def rank_determinant(tc: TriangleConfig) -> float:
    """det [[x1 x2 x3], [y1 y2 y3], [1 1 1]], i.e. twice the signed area."""
    return 2.0 * signed_area(tc)

def triangle_rank_ok(tc: TriangleConfig, area_epsilon: float = AREA_EPSILON) -> bool:
    return abs(rank_determinant(tc)) >= area_epsilon

def _require_basis(t0: TriangleConfig, area_epsilon: float) -> None:
    if not triangle_rank_ok(t0, area_epsilon):
        raise DegenerateBasis(
            f"leading triangle is degenerate: |rank det|={abs(rank_determinant(t0)):.3e} < {area_epsilon:.1e}"
        )


# -----------------------------------------------------------------------------
# Homogeneous map
# -----------------------------------------------------------------------------
def solve_deformation(t0: TriangleConfig, tc: TriangleConfig,
                      area_epsilon: float = AREA_EPSILON) -> DeformationParams:
    """
    Q_CD and D such that Q_CD·P_{l,0} + D = P_{l,c} for the three leaders.
    Solved in closed form (Q = E_c·E_0⁻¹ on the edge matrices); an exactly
    rigid translation therefore yields Q = I bit-for-bit.
    """
    _require_basis(t0, area_epsilon)
    r11, r21, r12, r22 = _edges(t0)
    c11, c21, c12, c22 = _edges(tc)
    det = r11 * r22 - r12 * r21
    q11 = (c11 * r22 - c12 * r21) / det
    q12 = (c12 * r11 - c11 * r12) / det
    q21 = (c21 * r22 - c22 * r21) / det
    q22 = (c22 * r11 - c21 * r12) / det
    d1 = tc.p1.x - (q11 * t0.p1.x + q12 * t0.p1.y)
    d2 = tc.p1.y - (q21 * t0.p1.x + q22 * t0.p1.y)
    return DeformationParams(q11, q12, q21, q22, d1, d2)

def apply_deformation(params: DeformationParams, r0: Sequence[float]) -> Point2:
    x, y = float(r0[0]), float(r0[1])
    return Point2(params.q11 * x + params.q12 * y + params.d1,
                  params.q21 * x + params.q22 * y + params.d2)

def polar_decompose(params: DeformationParams, det_epsilon: float = DET_EPSILON) -> PolarDecomp:
    """
    Q_CD = R_CD·U_CD. The rotation angle of a 2x2 polar factor is
    atan2(q21 - q12, q11 + q22); U_CD = R_CDᵀ·Q_CD, symmetrized, and its
    eigenvalues (= singular values of Q_CD) follow in closed form.
    """
    det = params.det
    if not det > det_epsilon:
        raise SingularDeformation(f"det(Q_CD)={det:.3e} <= {det_epsilon:.1e}")
    q = params.q
    omega = math.atan2(params.q21 - params.q12, params.q11 + params.q22)
    c, s = math.cos(omega), math.sin(omega)
    r = np.array([[c, -s], [s, c]])
    u = r.T @ q
    u = 0.5 * (u + u.T)
    lam1, lam2 = _sym_eigs(u[0, 0], u[0, 1], u[1, 1])
    r.setflags(write=False)
    u.setflags(write=False)
    return PolarDecomp(r_cd=r, u_cd=u, lambda1=lam1, lambda2=lam2)

def _sym_eigs(a: float, b: float, d: float) -> Tuple[float, float]:
    mean = 0.5 * (a + d)
    rad = math.hypot(0.5 * (a - d), b)
    return mean - rad, mean + rad


# -----------------------------------------------------------------------------
# Barycentric followers
# -----------------------------------------------------------------------------
def barycentric_weights(t0: TriangleConfig, r0: Sequence[float],
                        area_epsilon: float = AREA_EPSILON) -> BarycentricWeights:
    _require_basis(t0, area_epsilon)
    r11, r21, r12, r22 = _edges(t0)
    det = r11 * r22 - r12 * r21
    px, py = float(r0[0]) - t0.p1.x, float(r0[1]) - t0.p1.y
    a2 = (px * r22 - py * r12) / det
    a3 = (py * r11 - px * r21) / det
    return BarycentricWeights(1.0 - a2 - a3, a2, a3)

def follower_position(w: BarycentricWeights, leaders: TriangleConfig) -> Point2:
    return Point2(w.a1 * leaders.p1.x + w.a2 * leaders.p2.x + w.a3 * leaders.p3.x,
                  w.a1 * leaders.p1.y + w.a2 * leaders.p2.y + w.a3 * leaders.p3.y)

def weights_matrix(t0: TriangleConfig, points: Iterable[Sequence[float]]) -> np.ndarray:
    """(N, 3) stack of barycentric weights, rows in follower order."""
    rows = [tuple(barycentric_weights(t0, p)) for p in points]
    return np.array(rows, dtype=float).reshape(-1, 3)


# -----------------------------------------------------------------------------
# Batched forms (planner / sim hot paths)
# -----------------------------------------------------------------------------
def deformation_jacobians(t0: TriangleConfig, leaders: np.ndarray) -> np.ndarray:
    """
    Q_CD for a stack of leader configurations `leaders` of shape (..., 3, 2).
    Same closed form as solve_deformation.
    """
    _require_basis(t0, AREA_EPSILON)
    r11, r21, r12, r22 = _edges(t0)
    det = r11 * r22 - r12 * r21
    c1 = leaders[..., 1, :] - leaders[..., 0, :]
    c2 = leaders[..., 2, :] - leaders[..., 0, :]
    q = np.empty(leaders.shape[:-2] + (2, 2))
    q[..., 0, 0] = (c1[..., 0] * r22 - c2[..., 0] * r21) / det
    q[..., 0, 1] = (c2[..., 0] * r11 - c1[..., 0] * r12) / det
    q[..., 1, 0] = (c1[..., 1] * r22 - c2[..., 1] * r21) / det
    q[..., 1, 1] = (c2[..., 1] * r11 - c1[..., 1] * r12) / det
    return q

def stretch_eigenvalues(q: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(λ1, λ2, det) of U_CD for a stack of Jacobians (..., 2, 2)."""
    q11, q12 = q[..., 0, 0], q[..., 0, 1]
    q21, q22 = q[..., 1, 0], q[..., 1, 1]
    det = q11 * q22 - q12 * q21
    omega = np.arctan2(q21 - q12, q11 + q22)
    c, s = np.cos(omega), np.sin(omega)
    # U = Rᵀ Q
    u11 = c * q11 + s * q21
    u12 = c * q12 + s * q22
    u21 = -s * q11 + c * q21
    u22 = -s * q12 + c * q22
    b = 0.5 * (u12 + u21)
    mean = 0.5 * (u11 + u22)
    rad = np.hypot(0.5 * (u11 - u22), b)
    return mean - rad, mean + rad, det

def signed_areas(leaders: np.ndarray) -> np.ndarray:
    c1 = leaders[..., 1, :] - leaders[..., 0, :]
    c2 = leaders[..., 2, :] - leaders[..., 0, :]
    return 0.5 * (c1[..., 0] * c2[..., 1] - c2[..., 0] * c1[..., 1])
