# utils/dynamics.py
# 14-state quadcopter model (thrust-per-mass normalization) + RK4 integration.
# State layout, one row per UAV:
#   0-2 x y z | 3-5 vx vy vz | 6 F̄_T | 7-9 φ θ ψ | 10 F̄̇_T | 11-13 φ̇ θ̇ ψ̇
# Input layout: u_T, u_φ, u_θ, u_ψ.
from __future__ import annotations

import os
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from utils.errors import NonFiniteState

logger = logging.getLogger(__name__)

# ---------- Tunables (env overrides) ----------
GRAVITY = float(os.getenv("CD_GRAVITY", "9.81"))   # m/s²

STATE_DIM = 14
INPUT_DIM = 4
POS, VEL = slice(0, 3), slice(3, 6)
THRUST, EULER = 6, slice(7, 10)
THRUST_RATE, EULER_RATE = 10, slice(11, 14)
PHI, THETA, PSI = 7, 8, 9
PHI_RATE, THETA_RATE, PSI_RATE = 11, 12, 13


# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------
class QuadState(NamedTuple):
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0
    thrust: float = 0.0        # F̄_T, m/s²
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0
    thrust_rate: float = 0.0   # F̄̇_T, m/s³
    phi_rate: float = 0.0
    theta_rate: float = 0.0
    psi_rate: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)

    @classmethod
    def from_array(cls, a: np.ndarray) -> "QuadState":
        return cls(*(float(v) for v in np.asarray(a).reshape(STATE_DIM)))

    @classmethod
    def hover(cls, position: Sequence[float], g: float = GRAVITY) -> "QuadState":
        return cls(x=float(position[0]), y=float(position[1]), z=float(position[2]), thrust=g)


class ControlInput(NamedTuple):
    u_t: float = 0.0       # m/s⁴
    u_phi: float = 0.0     # rad/s²
    u_theta: float = 0.0
    u_psi: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


@dataclass(frozen=True)
class VehicleParams:
    g: float = GRAVITY
    u_limits: Optional[Tuple[float, float, float, float]] = None   # symmetric |u| bounds per channel

    def problems(self):
        out = []
        if not self.g > 0:
            out.append("vehicle.g must be > 0")
        if self.u_limits is not None and (len(self.u_limits) != INPUT_DIM or any(v <= 0 for v in self.u_limits)):
            out.append("vehicle.u_limits needs 4 positive bounds")
        return out

    def saturate(self, u: np.ndarray) -> np.ndarray:
        if self.u_limits is None:
            return u
        lim = np.asarray(self.u_limits, dtype=float)
        return np.clip(u, -lim, lim)


StateLike = Union[QuadState, np.ndarray]
InputLike = Union[ControlInput, np.ndarray]


# -----------------------------------------------------------------------------
# Kinematics
# -----------------------------------------------------------------------------
def rotation_matrix(phi: float, theta: float, psi: float) -> np.ndarray:
    """Ground-to-body rotation (3-2-1 Euler angles). Row 3 is the body k̂ axis in ground coordinates."""
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    return np.array([
        [ct * cp,                ct * sp,                -st],
        [sf * st * cp - cf * sp, sf * st * sp + cf * cp, sf * ct],
        [cf * st * cp + sf * sp, cf * st * sp - sf * cp, cf * ct],
    ])

def thrust_direction(phi, theta, psi) -> np.ndarray:
    """Body k̂ in ground coordinates for (broadcast) angle arrays; shape (..., 3)."""
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    return np.stack([cf * st * cp + sf * sp, cf * st * sp - sf * cp, cf * ct], axis=-1)


# -----------------------------------------------------------------------------
# Model
# -----------------------------------------------------------------------------
def _as_arrays(state: StateLike, u: InputLike) -> Tuple[np.ndarray, np.ndarray]:
    x = state.as_array() if isinstance(state, QuadState) else np.asarray(state, dtype=float)
    v = u.as_array() if isinstance(u, ControlInput) else np.asarray(u, dtype=float)
    return x, v

def _derivative(x: np.ndarray, u: np.ndarray, g: float) -> np.ndarray:
    dx = np.empty_like(x)
    dx[..., POS] = x[..., VEL]
    kb = thrust_direction(x[..., PHI], x[..., THETA], x[..., PSI])
    dx[..., VEL] = x[..., THRUST, None] * kb
    dx[..., 5] -= g
    dx[..., THRUST] = x[..., THRUST_RATE]
    dx[..., EULER] = x[..., EULER_RATE]
    dx[..., THRUST_RATE] = u[..., 0]
    dx[..., EULER_RATE] = u[..., 1:4]
    return dx

def state_derivative(state: StateLike, u: InputLike, params: VehicleParams = VehicleParams()) -> np.ndarray:
    """ẋ for one state (14,) or a fleet (N, 14) with inputs (4,) / (N, 4)."""
    x, v = _as_arrays(state, u)
    return _derivative(x, v, params.g)

def integrate_step(state: StateLike, u: InputLike, h: float,
                   params: VehicleParams = VehicleParams()) -> StateLike:
    """Classical RK4, input held constant over the step."""
    if not h > 0:
        raise ValueError(f"step must be > 0 (got {h})")
    x, v = _as_arrays(state, u)
    g = params.g
    k1 = _derivative(x, v, g)
    k2 = _derivative(x + 0.5 * h * k1, v, g)
    k3 = _derivative(x + 0.5 * h * k2, v, g)
    k4 = _derivative(x + h * k3, v, g)
    out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(out.reshape(-1, STATE_DIM)))
        raise NonFiniteState(f"non-finite state after RK4 step (uav, component) = {bad[:4].tolist()}")
    return QuadState.from_array(out) if isinstance(state, QuadState) else out
