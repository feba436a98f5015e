# utils/control.py
# Cascaded controller:
#   outer loop  -> fictitious acceleration U
#   setpoints   -> F̄_d, φ_d, θ_d from U' = U + g·ê3
#   inner loop  -> PD on the F̄_T, φ, θ double integrators
#   yaw         -> PD with feed-forward on ψ
# Every function takes one UAV or an (N, ...) fleet stack.
from __future__ import annotations

import os
import logging
from dataclasses import dataclass, fields
from typing import List, NamedTuple, Tuple, Union

import numpy as np

from utils.dynamics import (
    PHI,
    PHI_RATE,
    POS,
    PSI,
    PSI_RATE,
    THETA,
    THETA_RATE,
    THRUST,
    THRUST_RATE,
    VEL,
    ControlInput,
    QuadState,
    VehicleParams,
)
from utils.errors import ThrustSingularity
from utils.trajectory import DesiredState

logger = logging.getLogger(__name__)

# ---------- Tunables (env overrides) ----------
THRUST_TOL     = float(os.getenv("CD_THRUST_TOL", "1e-9"))   # m/s², floor on ‖U'‖ and u'_3
INNER_RATIO    = float(os.getenv("CD_INNER_RATIO", "5.0"))   # inner ω_n / outer ω_n


# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class Gains:
    gamma1: float = 2.0
    gamma2: float = 1.0
    k_t: float = 25.0
    k_t_rate: float = 10.0
    k_phi: float = 25.0
    k_phi_rate: float = 10.0
    k_theta: float = 25.0
    k_theta_rate: float = 10.0
    k_psi: float = 25.0
    k_psi_rate: float = 10.0

    @classmethod
    def critically_damped(cls, gamma1: float = 2.0, gamma2: float = 1.0,
                          ratio: float = INNER_RATIO) -> "Gains":
        """Inner channels critically damped at `ratio` × the outer natural frequency √γ2."""
        wn = ratio * float(np.sqrt(gamma2))
        kp, kd = wn * wn, 2.0 * wn
        return cls(gamma1, gamma2, kp, kd, kp, kd, kp, kd, kp, kd)

    def problems(self) -> List[str]:
        return [f"gains.{f.name} must be > 0" for f in fields(self) if not getattr(self, f.name) > 0]


class Setpoints(NamedTuple):
    thrust: Union[float, np.ndarray]    # F̄_d, m/s²
    phi: Union[float, np.ndarray]
    theta: Union[float, np.ndarray]


def _x(state) -> np.ndarray:
    return state.as_array() if isinstance(state, QuadState) else np.asarray(state, dtype=float)


# -----------------------------------------------------------------------------
# Outer loop
# -----------------------------------------------------------------------------
def outer_loop(state, desired: DesiredState, gains: Gains) -> np.ndarray:
    x = _x(state)
    return (np.asarray(desired.acceleration, dtype=float)
            + gains.gamma1 * (np.asarray(desired.velocity, dtype=float) - x[..., VEL])
            + gains.gamma2 * (np.asarray(desired.position, dtype=float) - x[..., POS]))

def extract_setpoints(u: np.ndarray, psi, params: VehicleParams = VehicleParams(),
                      tol: float = THRUST_TOL) -> Setpoints:
    """
    Thrust magnitude and roll / pitch that point the body k̂ axis along
    U' = U + g·ê3, so that F̄_d·k̂_b(φ_d, θ_d, ψ) == U'.
    """
    up = np.array(u, dtype=float)
    up[..., 2] = up[..., 2] + params.g
    f = np.linalg.norm(up, axis=-1)
    if np.any(f < tol) or np.any(up[..., 2] <= tol):
        raise ThrustSingularity(
            f"gravity-compensated command cannot be realized: ‖U'‖={np.min(f):.3e}, min u'_3={np.min(up[..., 2]):.3e}"
        )
    cp, sp = np.cos(psi), np.sin(psi)
    u1, u2, u3 = up[..., 0], up[..., 1], up[..., 2]
    phi = np.arcsin(np.clip((u1 * sp - u2 * cp) / f, -1.0, 1.0))
    theta = np.arctan2(u1 * cp + u2 * sp, u3)
    if np.ndim(f) == 0:
        return Setpoints(float(f), float(phi), float(theta))
    return Setpoints(f, phi, theta)


# -----------------------------------------------------------------------------
# Inner loop + yaw
# -----------------------------------------------------------------------------
def inner_loop(state, sp: Setpoints, gains: Gains) -> Tuple:
    x = _x(state)
    u_t = -gains.k_t_rate * x[..., THRUST_RATE] + gains.k_t * (sp.thrust - x[..., THRUST])
    u_phi = -gains.k_phi_rate * x[..., PHI_RATE] + gains.k_phi * (sp.phi - x[..., PHI])
    u_theta = -gains.k_theta_rate * x[..., THETA_RATE] + gains.k_theta * (sp.theta - x[..., THETA])
    return u_t, u_phi, u_theta

def yaw_control(state, psi_d, psi_rate_d, psi_acc_d, gains: Gains):
    x = _x(state)
    return psi_acc_d + gains.k_psi_rate * (psi_rate_d - x[..., PSI_RATE]) + gains.k_psi * (psi_d - x[..., PSI])

def control_step(state, desired: DesiredState, psi_ref: Tuple[float, float, float] = (0.0, 0.0, 0.0),
                 gains: Gains = Gains(), params: VehicleParams = VehicleParams()):
    """ControlInput for a QuadState; (N, 4) input array for an (N, 14) fleet."""
    x = _x(state)
    u_out = outer_loop(x, desired, gains)
    sp = extract_setpoints(u_out, x[..., PSI], params)
    u_t, u_phi, u_theta = inner_loop(x, sp, gains)
    u_psi = yaw_control(x, psi_ref[0], psi_ref[1], psi_ref[2], gains)
    u = params.saturate(np.stack([u_t, u_phi, u_theta, np.broadcast_to(u_psi, np.shape(u_t))], axis=-1))
    if isinstance(state, QuadState):
        return ControlInput(*(float(v) for v in u))
    return u
