"""Track-relative vehicle dynamics parameterized by centerline curvature.

Two closely related systems live here:

* the 5-state relative system [e_lat, mu, vx, vy, r] used for steady-state
  and terminal-set computations, and
* the 6-state curvilinear prediction system [s, e_lat, mu, vx, vy, r] used
  by the safety filter, where curvature is held constant per stage.

Both share the force rows of the global bicycle model; only the kinematic
rows differ. All kernels broadcast, and curvature may be an array matching
the batch shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .vehicle import (VehicleParams, dynamics_array, force_row_derivatives,
                      lateral_force, longitudinal_force, slip_angles, steady_throttle)

# 5-state relative indices
E_LAT, MU, RVX, RVY, RR = range(5)
REL_DIM = 5

# 6-state curvilinear indices (s prepended)
CS = 0
CURV_DIM = 6

_SINGULARITY_TOL = 1e-6


class CurvatureSingularity(ValueError):
    """Relative dynamics evaluated at (or across) the 1 - c*e_lat = 0 circle."""


def _denominators(c, e_lat, guard: bool):
    D = 1.0 - np.asarray(c) * e_lat
    if guard and np.any(np.abs(D) < _SINGULARITY_TOL):
        raise CurvatureSingularity("1 - c*e_lat vanished; state left the curvilinear chart")
    return D


def _force_rows(vx, vy, r, delta, tau, p: VehicleParams):
    alpha_f, alpha_r = slip_angles(vx, vy, r, delta, p)
    Fyf = lateral_force(alpha_f, p.Bf, p.Cf, p.Df)
    Fyr = lateral_force(alpha_r, p.Br, p.Cr, p.Dr)
    Fx = longitudinal_force(vx, tau, p)
    dvx = (Fx - Fyf * np.sin(delta)) / p.m + vy * r
    dvy = (Fyr + Fyf * np.cos(delta)) / p.m - vx * r
    dr = (Fyf * p.lf * np.cos(delta) - Fyr * p.lr) / p.Iz
    return dvx, dvy, dr


def relative_dynamics_cont(xr, u, c, p: VehicleParams, guard: bool = True):
    """Continuous 5-state relative derivative; broadcasts over leading dims."""
    xr = np.asarray(xr, dtype=float)
    u = np.asarray(u, dtype=float)
    e, mu, vx, vy, r = (xr[..., i] for i in range(REL_DIM))
    delta, tau = u[..., 0], u[..., 1]
    D = _denominators(c, e, guard)
    smu, cmu = np.sin(mu), np.cos(mu)
    vproj = vx * cmu - vy * smu

    out = np.empty_like(xr)
    out[..., E_LAT] = vx * smu + vy * cmu
    out[..., MU] = r - c * vproj / D
    out[..., RVX], out[..., RVY], out[..., RR] = _force_rows(vx, vy, r, delta, tau, p)
    return out


def relative_step(xr, u, c, p: VehicleParams, Ts: float):
    """Euler step of the 5-state relative system."""
    return np.asarray(xr, dtype=float) + Ts * relative_dynamics_cont(xr, u, c, p)


def relative_jacobians_cont(xr, u, c, p: VehicleParams):
    """Continuous-time Jacobians (d f_r/d x_r, d f_r/d u); broadcasts."""
    xr = np.asarray(xr, dtype=float)
    u = np.asarray(u, dtype=float)
    e, mu, vx, vy, r = (xr[..., i] for i in range(REL_DIM))
    delta, tau = u[..., 0], u[..., 1]
    c = np.asarray(c, dtype=float)
    D = _denominators(c, e, guard=True)
    smu, cmu = np.sin(mu), np.cos(mu)
    vproj = vx * cmu - vy * smu
    d = force_row_derivatives(vx, vy, r, delta, tau, p)

    batch = np.broadcast_shapes(xr.shape[:-1], u.shape[:-1], c.shape)
    Jx = np.zeros(batch + (REL_DIM, REL_DIM))
    Ju = np.zeros(batch + (REL_DIM, 2))

    Jx[..., E_LAT, MU] = vproj
    Jx[..., E_LAT, RVX] = smu
    Jx[..., E_LAT, RVY] = cmu

    Jx[..., MU, E_LAT] = -(c**2) * vproj / D**2
    Jx[..., MU, MU] = c * (vx * smu + vy * cmu) / D
    Jx[..., MU, RVX] = -c * cmu / D
    Jx[..., MU, RVY] = c * smu / D
    Jx[..., MU, RR] = 1.0

    for row, key in ((RVX, "dvx"), (RVY, "dvy"), (RR, "dr")):
        Jx[..., row, RVX] = d[f"{key}_dvx"]
        Jx[..., row, RVY] = d[f"{key}_dvy"]
        Jx[..., row, RR] = d[f"{key}_dr"]
        Ju[..., row, 0] = d[f"{key}_ddelta"]
    Ju[..., RVX, 1] = d["dvx_dtau"]
    return Jx, Ju


def relative_step_jacobians(xr, u, c, p: VehicleParams, Ts: float):
    """Jacobians of the Euler relative step: A = I + Ts*Jx, B = Ts*Ju."""
    Jx, Ju = relative_jacobians_cont(xr, u, c, p)
    A = Ts * Jx
    A[..., range(REL_DIM), range(REL_DIM)] += 1.0
    return A, Ts * Ju


# -- s-augmented curvilinear system (filter prediction model) ----------------

def curvilinear_step(xc, u, c, p: VehicleParams, Ts: float):
    """Euler step of [s, e_lat, mu, vx, vy, r] with frozen curvature c."""
    xc = np.asarray(xc, dtype=float)
    e, mu, vx, vy = xc[..., 1], xc[..., 2], xc[..., 3], xc[..., 4]
    D = _denominators(c, e, guard=True)
    sdot = (vx * np.cos(mu) - vy * np.sin(mu)) / D
    out = np.empty_like(xc)
    out[..., CS] = xc[..., CS] + Ts * sdot
    out[..., 1:] = relative_step(xc[..., 1:], u, c, p, Ts)
    return out


def curvilinear_step_scalar(xc, u, c, p: VehicleParams, Ts: float):
    """Scalar fast path of curvilinear_step (plain floats, no array ceremony).

    Matches the batched kernel to roundoff; used by hot rollout loops.
    """
    s, e, mu, vx, vy, r = (float(v) for v in xc)
    delta, tau = float(u[0]), float(u[1])
    c = float(c)
    D = 1.0 - c * e
    if abs(D) < _SINGULARITY_TOL:
        raise CurvatureSingularity("1 - c*e_lat vanished; state left the curvilinear chart")
    vxe = vx if vx > p.v_min else p.v_min
    af = delta - math.atan((vy + p.lf * r) / vxe)
    ar = math.atan((p.lr * r - vy) / vxe)
    Fyf = p.Df * math.sin(p.Cf * math.atan(p.Bf * af))
    Fyr = p.Dr * math.sin(p.Cr * math.atan(p.Br * ar))
    Fx = p.C1 * tau + p.C2 * tau * tau + p.C3 * vx + p.C4 * vx * vx + p.C5 * tau * vx
    smu, cmu = math.sin(mu), math.cos(mu)
    sd, cd = math.sin(delta), math.cos(delta)
    vproj = vx * cmu - vy * smu
    return np.array([
        s + Ts * vproj / D,
        e + Ts * (vx * smu + vy * cmu),
        mu + Ts * (r - c * vproj / D),
        vx + Ts * ((Fx - Fyf * sd) / p.m + vy * r),
        vy + Ts * ((Fyr + Fyf * cd) / p.m - vx * r),
        r + Ts * ((Fyf * p.lf * cd - Fyr * p.lr) / p.Iz),
    ])


def curvilinear_step_jacobians(xc, u, c, p: VehicleParams, Ts: float):
    """Jacobians of curvilinear_step; curvature is frozen, so d/ds = 0."""
    xc = np.asarray(xc, dtype=float)
    u = np.asarray(u, dtype=float)
    c = np.asarray(c, dtype=float)
    e, mu, vx, vy = xc[..., 1], xc[..., 2], xc[..., 3], xc[..., 4]
    D = _denominators(c, e, guard=True)
    smu, cmu = np.sin(mu), np.cos(mu)
    vproj = vx * cmu - vy * smu

    Ar, Br = relative_step_jacobians(xc[..., 1:], u, c, p, Ts)
    batch = np.broadcast_shapes(xc.shape[:-1], u.shape[:-1], c.shape)
    A = np.zeros(batch + (CURV_DIM, CURV_DIM))
    B = np.zeros(batch + (CURV_DIM, 2))
    A[..., 1:, 1:] = Ar
    B[..., 1:, :] = Br
    A[..., CS, CS] = 1.0
    A[..., CS, 1] = Ts * vproj * c / D**2
    A[..., CS, 2] = Ts * (-vx * smu - vy * cmu) / D
    A[..., CS, 3] = Ts * cmu / D
    A[..., CS, 4] = Ts * (-smu) / D
    return A, B


# -- steady states ------------------------------------------------------------

@dataclass(frozen=True)
class SteadyState:
    """Fixed point of the relative dynamics on a constant-curvature arc."""

    c: float
    x_r_e: np.ndarray  # (5,) = [0, mu_e, v_x_target, vy_e, r_e]
    u_e: np.ndarray    # (2,) = [delta_e, tau_e]


class SteadyStateError(RuntimeError):
    """Newton failed; the curvature/speed pair exceeds the tire model."""


def compute_steady_state(c: float, v_x_target: float, p: VehicleParams, Ts: float,
                         tol: float = 1e-10, max_iter: int = 60) -> SteadyState:
    """Solve for the equilibrium (mu, vy, r, delta, tau) at curvature c.

    e_lat = 0 and vx = v_x_target are imposed; the five continuous-time
    residual rows are driven to zero with a damped Newton iteration, which
    makes the Euler step an exact fixed point for any Ts.
    """
    if v_x_target <= p.v_min:
        raise ValueError("v_x_target must exceed the slip velocity floor")
    # kinematic seed
    z = np.array([0.0, 0.0, c * v_x_target, np.arctan(c * p.wheelbase),
                  steady_throttle(v_x_target, p)])

    def residual(zv):
        xr = np.array([0.0, zv[0], v_x_target, zv[1], zv[2]])
        u = np.array([zv[3], zv[4]])
        return relative_dynamics_cont(xr, u, c, p), xr, u

    res, xr, u = residual(z)
    norm = np.linalg.norm(res)
    for _ in range(max_iter):
        if norm <= tol:
            return SteadyState(float(c), xr.copy(), u.copy())
        Jx, Ju = relative_jacobians_cont(xr, u, c, p)
        J = np.column_stack([Jx[:, [MU, RVY, RR]], Ju])
        try:
            step = np.linalg.solve(J, -res)
        except np.linalg.LinAlgError as e:
            raise SteadyStateError(f"singular Newton system at c={c}: {e}") from e
        alpha = 1.0
        for _ in range(30):
            res_new, xr_new, u_new = residual(z + alpha * step)
            if np.linalg.norm(res_new) < norm:
                break
            alpha *= 0.5
        else:
            raise SteadyStateError(f"Newton stalled at c={c}, v={v_x_target} "
                                   f"(residual {norm:.2e})")
        z = z + alpha * step
        res, xr, u, norm = res_new, xr_new, u_new, np.linalg.norm(res_new)
    raise SteadyStateError(f"no steady state at c={c}, v={v_x_target}: "
                           f"residual {norm:.2e} after {max_iter} iterations")


@dataclass(frozen=True)
class LinearizedModel:
    """Discrete linearization of the relative system at a steady state."""

    A: np.ndarray  # (5, 5)
    B: np.ndarray  # (5, 2)
    steady_state: SteadyState


def linearize_relative(ss: SteadyState, p: VehicleParams, Ts: float) -> LinearizedModel:
    A, B = relative_step_jacobians(ss.x_r_e, ss.u_e, ss.c, p, Ts)
    return LinearizedModel(A, B, ss)
