"""Dynamic bicycle model with Pacejka lateral tire forces.

Global-frame state is [px, py, psi, vx, vy, r]; input is [delta, tau]
(steering angle, drivetrain command). All array kernels broadcast over
leading dimensions so batches of states can be evaluated in one call.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, fields
from pathlib import Path

import numpy as np

# state / input component indices
PX, PY, PSI, VX, VY, R = range(6)
D_DELTA, D_TAU = 0, 1

STATE_DIM = 6
INPUT_DIM = 2


@dataclass(frozen=True)
class VehicleParams:
    """Physical vehicle parameters (SI units).

    The shipped defaults describe a 1:28-scale RC car and are configuration,
    not ground truth; everything downstream is parameter-relative.
    """

    m: float = 0.19        # mass, kg
    Iz: float = 3.2e-4     # yaw inertia, kg m^2
    lf: float = 0.052      # CoG to front axle, m
    lr: float = 0.048      # CoG to rear axle, m
    w: float = 0.08        # vehicle width, m
    Bf: float = 4.5        # Pacejka stiffness, front
    Cf: float = 1.45       # Pacejka shape, front
    Df: float = 0.80       # Pacejka peak force, front, N
    Br: float = 6.0
    Cr: float = 1.40
    Dr: float = 1.05
    C1: float = 1.10       # drivetrain: F_x = C1*tau + C2*tau^2 + C3*vx + C4*vx^2 + C5*tau*vx
    C2: float = 0.55
    C3: float = -0.21
    C4: float = -0.001
    C5: float = -0.10
    v_min: float = 0.05    # slip-angle velocity floor, m/s

    def __post_init__(self):
        for name in ("m", "Iz", "lf", "lr", "w", "Df", "Dr", "Bf", "Br", "Cf", "Cr", "v_min"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"VehicleParams.{name} must be > 0")

    @property
    def wheelbase(self) -> float:
        return self.lf + self.lr

    @classmethod
    def from_file(cls, path) -> "VehicleParams":
        """Load from a flat JSON key-value document. Unknown keys are rejected."""
        raw = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        extra = set(raw) - known
        if extra:
            raise ValueError(f"unknown vehicle parameter(s): {sorted(extra)}")
        return cls(**raw)

    def to_file(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")


@dataclass
class VehicleState:
    px: float = 0.0
    py: float = 0.0
    psi: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    r: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.px, self.py, self.psi, self.vx, self.vy, self.r])

    @classmethod
    def from_array(cls, x) -> "VehicleState":
        px, py, psi, vx, vy, r = (float(v) for v in x)
        return cls(px, py, psi, vx, vy, r)


@dataclass
class ControlInput:
    delta: float = 0.0
    tau: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.delta, self.tau])

    @classmethod
    def from_array(cls, u) -> "ControlInput":
        return cls(float(u[0]), float(u[1]))


@dataclass
class TireForces:
    Fyf: float
    Fyr: float
    alpha_f: float
    alpha_r: float
    Fx: float


def _require_finite(*values) -> None:
    for v in values:
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite state or input")


def slip_angles(vx, vy, r, delta, p: VehicleParams):
    """Front/rear slip angles with the low-speed denominator floor.

    Restoring sign convention: positive slip produces the lateral force that
    opposes the slip (positive e.g. while carving a left turn), so
    alpha_f = delta - arctan((vy + lf*r)/vx) and
    alpha_r = arctan((lr*r - vy)/vx).
    """
    vxe = np.maximum(vx, p.v_min)
    alpha_f = delta - np.arctan((vy + p.lf * r) / vxe)
    alpha_r = np.arctan((p.lr * r - vy) / vxe)
    return alpha_f, alpha_r


def lateral_force(alpha, B, C, D):
    """Simplified Pacejka: D*sin(C*arctan(B*alpha))."""
    return D * np.sin(C * np.arctan(B * alpha))


def longitudinal_force(vx, tau, p: VehicleParams):
    return p.C1 * tau + p.C2 * tau**2 + p.C3 * vx + p.C4 * vx**2 + p.C5 * tau * vx


def tire_forces(state: VehicleState, u: ControlInput, p: VehicleParams) -> TireForces:
    """Tire forces at a single state/input."""
    _require_finite(state.as_array(), u.as_array())
    alpha_f, alpha_r = slip_angles(state.vx, state.vy, state.r, u.delta, p)
    return TireForces(
        Fyf=float(lateral_force(alpha_f, p.Bf, p.Cf, p.Df)),
        Fyr=float(lateral_force(alpha_r, p.Br, p.Cr, p.Dr)),
        alpha_f=float(alpha_f),
        alpha_r=float(alpha_r),
        Fx=float(longitudinal_force(state.vx, u.tau, p)),
    )


def dynamics_array(x, u, p: VehicleParams):
    """Continuous-time state derivative; broadcasts over leading dims.

    x: (..., 6), u: (..., 2) -> (..., 6)
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    psi, vx, vy, r = x[..., PSI], x[..., VX], x[..., VY], x[..., R]
    delta, tau = u[..., D_DELTA], u[..., D_TAU]

    alpha_f, alpha_r = slip_angles(vx, vy, r, delta, p)
    Fyf = lateral_force(alpha_f, p.Bf, p.Cf, p.Df)
    Fyr = lateral_force(alpha_r, p.Br, p.Cr, p.Dr)
    Fx = longitudinal_force(vx, tau, p)

    out = np.empty_like(x)
    out[..., PX] = vx * np.cos(psi) - vy * np.sin(psi)
    out[..., PY] = vx * np.sin(psi) + vy * np.cos(psi)
    out[..., PSI] = r
    out[..., VX] = (Fx - Fyf * np.sin(delta)) / p.m + vy * r
    out[..., VY] = (Fyr + Fyf * np.cos(delta)) / p.m - vx * r
    out[..., R] = (Fyf * p.lf * np.cos(delta) - Fyr * p.lr) / p.Iz
    return out


def force_row_derivatives(vx, vy, r, delta, tau, p: VehicleParams):
    """Partials of (vxdot, vydot, rdot) w.r.t. (vx, vy, r, delta, tau).

    Shared by the global and track-relative Jacobians; returns a dict of
    broadcast arrays keyed 'd<row>_d<var>'.
    """
    vxe = np.maximum(vx, p.v_min)
    live = (vx > p.v_min).astype(float)  # slip denominator frozen below the floor

    qf = (vy + p.lf * r) / vxe
    qr = (p.lr * r - vy) / vxe
    af = delta - np.arctan(qf)
    ar = np.arctan(qr)

    # d alpha / d state
    wf = 1.0 / ((1.0 + qf**2) * vxe)
    wr = 1.0 / ((1.0 + qr**2) * vxe)
    daf_dvx = qf * live * wf
    daf_dvy = -wf
    daf_dr = -p.lf * wf
    dar_dvx = -qr * live * wr
    dar_dvy = -wr
    dar_dr = p.lr * wr

    Fyf = lateral_force(af, p.Bf, p.Cf, p.Df)
    Fyr = lateral_force(ar, p.Br, p.Cr, p.Dr)
    Gf = p.Df * np.cos(p.Cf * np.arctan(p.Bf * af)) * p.Cf * p.Bf / (1.0 + (p.Bf * af) ** 2)
    Gr = p.Dr * np.cos(p.Cr * np.arctan(p.Br * ar)) * p.Cr * p.Br / (1.0 + (p.Br * ar) ** 2)

    dFx_dvx = p.C3 + 2.0 * p.C4 * vx + p.C5 * tau
    dFx_dtau = p.C1 + 2.0 * p.C2 * tau + p.C5 * vx

    sd, cd = np.sin(delta), np.cos(delta)
    m, Iz, lf, lr = p.m, p.Iz, p.lf, p.lr

    return {
        "dvx_dvx": (dFx_dvx - Gf * daf_dvx * sd) / m,
        "dvx_dvy": -Gf * daf_dvy * sd / m + r,
        "dvx_dr": -Gf * daf_dr * sd / m + vy,
        "dvx_ddelta": (-Gf * sd - Fyf * cd) / m,
        "dvx_dtau": dFx_dtau / m + np.zeros_like(vx),
        "dvy_dvx": (Gr * dar_dvx + Gf * daf_dvx * cd) / m - r,
        "dvy_dvy": (Gr * dar_dvy + Gf * daf_dvy * cd) / m,
        "dvy_dr": (Gr * dar_dr + Gf * daf_dr * cd) / m - vx,
        "dvy_ddelta": (Gf * cd - Fyf * sd) / m,
        "dr_dvx": (Gf * daf_dvx * lf * cd - Gr * dar_dvx * lr) / Iz,
        "dr_dvy": (Gf * daf_dvy * lf * cd - Gr * dar_dvy * lr) / Iz,
        "dr_dr": (Gf * daf_dr * lf * cd - Gr * dar_dr * lr) / Iz,
        "dr_ddelta": (Gf * lf * cd - Fyf * lf * sd) / Iz,
    }


def jacobians_array(x, u, p: VehicleParams, Ts: float):
    """Exact Jacobians of the Euler discrete step; broadcasts.

    x: (..., 6), u: (..., 2) -> A: (..., 6, 6), B: (..., 6, 2)
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    psi, vx, vy, r = x[..., PSI], x[..., VX], x[..., VY], x[..., R]
    delta, tau = u[..., D_DELTA], u[..., D_TAU]
    d = force_row_derivatives(vx, vy, r, delta, tau, p)

    batch = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
    Jx = np.zeros(batch + (STATE_DIM, STATE_DIM))
    Ju = np.zeros(batch + (STATE_DIM, INPUT_DIM))
    sp, cp = np.sin(psi), np.cos(psi)

    Jx[..., PX, PSI] = -vx * sp - vy * cp
    Jx[..., PX, VX] = cp
    Jx[..., PX, VY] = -sp
    Jx[..., PY, PSI] = vx * cp - vy * sp
    Jx[..., PY, VX] = sp
    Jx[..., PY, VY] = cp
    Jx[..., PSI, R] = 1.0
    Jx[..., VX, VX] = d["dvx_dvx"]
    Jx[..., VX, VY] = d["dvx_dvy"]
    Jx[..., VX, R] = d["dvx_dr"]
    Jx[..., VY, VX] = d["dvy_dvx"]
    Jx[..., VY, VY] = d["dvy_dvy"]
    Jx[..., VY, R] = d["dvy_dr"]
    Jx[..., R, VX] = d["dr_dvx"]
    Jx[..., R, VY] = d["dr_dvy"]
    Jx[..., R, R] = d["dr_dr"]

    Ju[..., VX, D_DELTA] = d["dvx_ddelta"]
    Ju[..., VX, D_TAU] = d["dvx_dtau"]
    Ju[..., VY, D_DELTA] = d["dvy_ddelta"]
    Ju[..., R, D_DELTA] = d["dr_ddelta"]

    A = Ts * Jx
    A[..., range(STATE_DIM), range(STATE_DIM)] += 1.0
    return A, Ts * Ju


def continuous_dynamics(state: VehicleState, u: ControlInput, p: VehicleParams) -> np.ndarray:
    """Continuous-time derivative of a single state (6,)."""
    _require_finite(state.as_array(), u.as_array())
    return dynamics_array(state.as_array(), u.as_array(), p)


def discrete_step(state: VehicleState, u: ControlInput, p: VehicleParams, Ts: float) -> VehicleState:
    """One Euler-forward step: x + Ts * f(x, u)."""
    if Ts < 0:
        raise ValueError("Ts must be >= 0")
    x = state.as_array()
    return VehicleState.from_array(x + Ts * dynamics_array(x, u.as_array(), p))


def dynamics_jacobians(state: VehicleState, u: ControlInput, p: VehicleParams, Ts: float):
    """Analytic Jacobians (A, B) of discrete_step at a single point."""
    return jacobians_array(state.as_array(), u.as_array(), p, Ts)


def rk4_step_array(x, u, p: VehicleParams, Ts: float, substeps: int = 1):
    """RK4 reference integrator (zero-order-hold input); broadcasts.

    Used as the plant in model-mismatch mode and as an integration oracle.
    """
    x = np.asarray(x, dtype=float).copy()
    h = Ts / substeps
    for _ in range(substeps):
        k1 = dynamics_array(x, u, p)
        k2 = dynamics_array(x + 0.5 * h * k1, u, p)
        k3 = dynamics_array(x + 0.5 * h * k2, u, p)
        k4 = dynamics_array(x + h * k3, u, p)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def steady_throttle(v: float, p: VehicleParams) -> float:
    """Drivetrain command holding speed v on a straight (F_x = 0 root)."""
    a = p.C2
    b = p.C1 + p.C5 * v
    c = p.C3 * v + p.C4 * v**2
    if abs(a) < 1e-12:
        return -c / b
    disc = b * b - 4 * a * c
    if disc < 0:
        raise ValueError(f"no steady throttle exists for v={v}")
    return (-b + math.sqrt(disc)) / (2 * a)
