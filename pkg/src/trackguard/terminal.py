"""Offline terminal-set pipeline.

Computes a single linear gain K and ellipsoid shape P such that the scaled
ellipsoid around each curvature-parameterized steady state is invariant for
the linearized closed loop, sits inside the state constraints, and maps into
the input constraints, via a log-det semidefinite program over the grid of
curvatures. A multi-start ascent then searches for nonlinear invariance
violations across the continuous curvature range; the level is shrunk until
none are found.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .relative import (SteadyState, SteadyStateError, compute_steady_state,
                       linearize_relative, relative_step, relative_step_jacobians)
from .vehicle import VehicleParams


class SynthesisError(RuntimeError):
    pass


def _default_H_h(e_lat_max=0.26, mu_max=np.pi / 2, dv_max=0.5, vy_max=0.6, r_max=6.0,
                 v_x_target=1.5):
    """Relative-state polytope H x_r <= h around the operating envelope."""
    H = np.zeros((10, 5))
    h = np.zeros(10)
    rows = [(0, 1.0, e_lat_max), (0, -1.0, e_lat_max),
            (1, 1.0, mu_max), (1, -1.0, mu_max),
            (2, 1.0, v_x_target + dv_max), (2, -1.0, -(v_x_target - dv_max)),
            (3, 1.0, vy_max), (3, -1.0, vy_max),
            (4, 1.0, r_max), (4, -1.0, r_max)]
    for k, (j, sgn, bound) in enumerate(rows):
        H[k, j] = sgn
        h[k] = bound
    return H, h


def _box_G_g(delta_max=0.40, tau_min=-1.0, tau_max=1.0):
    G = np.array([[1.0, 0], [-1.0, 0], [0, 1.0], [0, -1.0]])
    g = np.array([delta_max, delta_max, tau_max, -tau_min])
    return G, g


@dataclass
class SynthesisConfig:
    n_c: int = 21
    c_max: float = 2.5
    v_x_target: float = 1.2
    Ts: float = 0.0125
    Q: np.ndarray = field(default_factory=lambda: np.diag([3.0, 0.4, 1.6, 1.1, 0.06]))
    R: np.ndarray = field(default_factory=lambda: np.diag([0.05, 0.05]))
    dissipation_margin: float = 1e-3
    interp_refine: int = 8   # steady-state interpolation grid densification
    H: np.ndarray | None = None
    h: np.ndarray | None = None
    G: np.ndarray | None = None
    g: np.ndarray | None = None
    sdp_tol: float = 1e-7
    shrink_factor: float = 0.95
    alpha_min: float = 1e-3
    n_verify_starts: int = 1000
    verify_iters: int = 200
    seed: int = 0
    # envelope knobs used when H/h are not given explicitly
    e_lat_max: float = 0.26
    mu_max: float = float(np.pi / 2)
    dv_max: float = 0.5
    vy_max: float = 0.6
    r_max: float = 6.0
    delta_max: float = 0.40
    tau_min: float = -1.0
    tau_max: float = 1.0

    def __post_init__(self):
        if self.n_c < 2 or self.n_c % 2 == 0:
            raise ValueError("n_c must be odd and >= 3 so that c = 0 is on the grid")
        self.Q = np.asarray(self.Q, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        if np.linalg.eigvalsh(self.Q).min() < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(self.R).min() <= 0:
            raise ValueError("R must be positive definite")
        if self.H is None or self.h is None:
            self.H, self.h = _default_H_h(self.e_lat_max, self.mu_max, self.dv_max,
                                          self.vy_max, self.r_max, self.v_x_target)
        else:
            self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
            self.h = np.atleast_1d(np.asarray(self.h, dtype=float))
        if self.G is None or self.g is None:
            self.G, self.g = _box_G_g(self.delta_max, self.tau_min, self.tau_max)
        else:
            self.G = np.atleast_2d(np.asarray(self.G, dtype=float))
            self.g = np.atleast_1d(np.asarray(self.g, dtype=float))

    def curvature_grid(self) -> np.ndarray:
        return np.linspace(-self.c_max, self.c_max, self.n_c)

    def digest(self) -> str:
        payload = json.dumps({
            "n_c": self.n_c, "c_max": self.c_max, "v_x_target": self.v_x_target,
            "Ts": self.Ts, "Q": self.Q.tolist(), "R": self.R.tolist(),
            "H": self.H.tolist(), "h": self.h.tolist(),
            "G": self.G.tolist(), "g": self.g.tolist(),
        }, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    @classmethod
    def from_file(cls, path) -> "SynthesisConfig":
        raw = json.loads(Path(path).read_text())
        for key in ("Q", "R", "H", "h", "G", "g"):
            if key in raw:
                raw[key] = np.asarray(raw[key], dtype=float)
        return cls(**raw)


@dataclass
class VerificationReport:
    worst_objective: float
    worst_state: np.ndarray
    worst_curvature: float
    n_starts: int
    alpha: float
    verified: bool

    def to_dict(self) -> dict:
        return {"worst_objective": self.worst_objective,
                "worst_state": list(np.asarray(self.worst_state, dtype=float)),
                "worst_curvature": self.worst_curvature,
                "n_starts": self.n_starts, "alpha": self.alpha,
                "verified": self.verified}


@dataclass
class SynthesisReport:
    lyapunov_residuals: np.ndarray       # (n_c,) max eig of decrease LMI
    containment_residuals: np.ndarray    # min eig across containment LMIs per grid point
    steady_state_residuals: np.ndarray   # discrete fixed-point gaps
    solve_time: float
    solver: str


class TerminalSet:
    """Certified invariant set: gain K, shape P, scale alpha, curvature grid."""

    def __init__(self, P, K, alpha, grid, v_x_target, Ts, u_lb, u_ub,
                 provenance=None):
        self.P = np.asarray(P, dtype=float)
        self.K = np.asarray(K, dtype=float)
        self.alpha = float(alpha)
        self.grid = list(grid)
        self.v_x_target = float(v_x_target)
        self.Ts = float(Ts)
        self.u_lb = np.asarray(u_lb, dtype=float)
        self.u_ub = np.asarray(u_ub, dtype=float)
        self.provenance = provenance or {}
        self._cs = np.array([ss.c for ss in self.grid])
        order = np.argsort(self._cs)
        self._cs = self._cs[order]
        self.grid = [self.grid[i] for i in order]
        self._xe = np.array([ss.x_r_e for ss in self.grid])
        self._ue = np.array([ss.u_e for ss in self.grid])
        np.linalg.cholesky(self.P)  # validates symmetry + definiteness

    @property
    def c_range(self):
        return float(self._cs[0]), float(self._cs[-1])

    def steady_state_at(self, c):
        """Piecewise-linear interpolation of (x_e, u_e) in curvature."""
        c = np.asarray(c, dtype=float)
        lo, hi = self.c_range
        if np.any(c < lo - 1e-12) or np.any(c > hi + 1e-12):
            raise ValueError(f"curvature {c} outside certified range [{lo}, {hi}]")
        xe = np.stack([np.interp(c, self._cs, self._xe[:, j]) for j in range(5)], axis=-1)
        ue = np.stack([np.interp(c, self._cs, self._ue[:, j]) for j in range(2)], axis=-1)
        return xe, ue

    def terminal_law(self, x_r, c):
        """kappa_f: steady input plus K on the deviation, clipped to bounds."""
        xe, ue = self.steady_state_at(c)
        u = ue + (np.asarray(x_r) - xe) @ self.K.T
        return np.clip(u, self.u_lb, self.u_ub)

    def scaled(self, alpha) -> "TerminalSet":
        return TerminalSet(self.P, self.K, alpha, self.grid, self.v_x_target,
                           self.Ts, self.u_lb, self.u_ub, dict(self.provenance))

    def with_gain(self, K) -> "TerminalSet":
        return TerminalSet(self.P, K, self.alpha, self.grid, self.v_x_target,
                           self.Ts, self.u_lb, self.u_ub, dict(self.provenance))

    def to_dict(self) -> dict:
        return {
            "P": self.P.tolist(), "K": self.K.tolist(), "alpha": self.alpha,
            "c_range": list(self.c_range), "v_x_target": self.v_x_target,
            "Ts": self.Ts, "u_lb": self.u_lb.tolist(), "u_ub": self.u_ub.tolist(),
            "grid": [{"c": ss.c, "x_r_e": ss.x_r_e.tolist(), "u_e": ss.u_e.tolist()}
                     for ss in self.grid],
            "provenance": self.provenance,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, doc) -> "TerminalSet":
        grid = [SteadyState(float(e["c"]), np.asarray(e["x_r_e"], dtype=float),
                            np.asarray(e["u_e"], dtype=float)) for e in doc["grid"]]
        return cls(np.asarray(doc["P"], dtype=float), np.asarray(doc["K"], dtype=float),
                   doc["alpha"], grid, doc["v_x_target"], doc["Ts"],
                   np.asarray(doc["u_lb"], dtype=float), np.asarray(doc["u_ub"], dtype=float),
                   doc.get("provenance", {}))

    @classmethod
    def load(cls, path) -> "TerminalSet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def membership(ts: TerminalSet, x_r, c):
    """Ellipsoid value (x_r - x_e(c))' P (x_r - x_e(c)) and containment flag."""
    xe, _ = ts.steady_state_at(c)
    dx = np.asarray(x_r, dtype=float) - xe
    value = float(dx @ ts.P @ dx)
    return value, value <= ts.alpha + 1e-12


def check_lyapunov_decrease(P, K, A, B, Q, R) -> float:
    """Max eigenvalue of A_cl' P A_cl - P + Q + K'RK; <= 0 means decrease."""
    A_cl = A + B @ K
    M = A_cl.T @ P @ A_cl - P + Q + K.T @ R @ K
    return float(np.linalg.eigvalsh(0.5 * (M + M.T)).max())


def _psd_sqrt(M):
    w, V = np.linalg.eigh(np.asarray(M, dtype=float))
    w = np.clip(w, 0.0, None)
    return V @ np.diag(np.sqrt(w)) @ V.T


def synthesize_from_models(models, cfg: SynthesisConfig, dissipation_margin: float = 1e-4,
                           force_solver: str | None = None):
    """Solve the log-det LMI program over supplied linearizations.

    models: list of (A, B, x_e, u_e) tuples, one per grid point. Returns
    (P, K, diagnostics dict). Split out from `synthesize` so toy systems can
    exercise the SDP machinery directly.

    States are rescaled so the constraint polytope is near the unit box
    (conic solvers lose feasibility digits otherwise), and the dissipation
    weight carries a small margin so solver-level feasibility error cannot
    surface as a positive Lyapunov residual.
    """
    import cvxpy as cp

    n = models[0][0].shape[0]
    m = models[0][1].shape[1]
    H, h, G, g = cfg.H, cfg.h, cfg.G, cfg.g

    # per-state scale from the tightest polytope row touching that state
    scale = np.ones(n)
    for j in range(n):
        touching = np.abs(H[:, j]) > 1e-12
        if touching.any():
            scale[j] = np.min(h[touching] / np.abs(H[touching, j]))
    S = np.diag(1.0 / scale)
    Sinv = np.diag(scale)

    models_s = [(S @ A @ Sinv, S @ B, S @ x_e, u_e) for A, B, x_e, u_e in models]
    H = H @ Sinv
    Q_marg = cfg.Q + dissipation_margin * np.eye(n)
    Qs = _psd_sqrt(Sinv @ Q_marg @ Sinv)
    Rs = _psd_sqrt(cfg.R)

    E = cp.Variable((n, n), symmetric=True)
    Y = cp.Variable((m, n))
    cons = [E >> 0]

    # The containment families share their left-hand sides across grid points,
    # so only the smallest margin per row binds; collapsing them keeps the
    # program identical while shrinking it dramatically.
    for j in range(H.shape[0]):
        margins = np.array([h[j] - H[j] @ x_e for _, _, x_e, _ in models_s])
        if margins.min() <= 0:
            raise SynthesisError(
                f"steady state violates state constraint row {j}; "
                "widen the polytope or lower v_x_target")
        Hj = H[j:j + 1]
        cons.append(Hj @ E @ Hj.T <= margins.min() ** 2)
    for l in range(G.shape[0]):
        margins = np.array([g[l] - G[l] @ u_e for _, _, _, u_e in models_s])
        if margins.min() <= 0:
            raise SynthesisError(
                f"steady input violates input constraint row {l}; "
                "widen input bounds or lower v_x_target")
        Gl = G[l:l + 1]
        cons.append(cp.bmat([[np.array([[margins.min() ** 2]]), Gl @ Y],
                             [(Gl @ Y).T, E]]) >> 0)

    Zn = np.zeros((n, n))
    Znm = np.zeros((n, m))
    for A, B, _, _ in models_s:
        AEBY = A @ E + B @ Y
        cons.append(cp.bmat([
            [E, AEBY.T, (Qs @ E).T, (Rs @ Y).T],
            [AEBY, E, Zn, Znm],
            [Qs @ E, Zn, np.eye(n), Znm],
            [Rs @ Y, Znm.T, Znm.T, np.eye(m)],
        ]) >> 0)

    problem = cp.Problem(cp.Maximize(cp.log_det(E)), cons)
    t0 = time.perf_counter()
    if force_solver == "SCS":
        solver = "SCS"
        problem.solve(solver=cp.SCS, eps=1e-9, max_iters=200_000)
    else:
        solver = "CLARABEL"
        try:
            problem.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10,
                          tol_feas=1e-10, max_iter=500)
        except (cp.SolverError, Exception):
            solver = "SCS"
            problem.solve(solver=cp.SCS, eps=1e-9, max_iters=200_000)
    elapsed = time.perf_counter() - t0

    if problem.status not in ("optimal", "optimal_inaccurate") or E.value is None:
        raise SynthesisError(
            f"terminal-set SDP returned status '{problem.status}'; try a smaller "
            "c_max, a lower v_x_target, or weaker dissipation weights Q, R")

    E_val = 0.5 * (E.value + E.value.T)
    P_scaled = np.linalg.inv(E_val)
    P_scaled = 0.5 * (P_scaled + P_scaled.T)
    P = S @ P_scaled @ S          # back to physical coordinates
    P = 0.5 * (P + P.T)
    K = (Y.value @ P_scaled) @ S
    return P, K, {"solver": solver, "solve_time": elapsed, "status": problem.status}


def synthesize(cfg: SynthesisConfig, p: VehicleParams):
    """Full pipeline: steady-state grid, linearize, solve the LMI program.

    Returns (TerminalSet with alpha = 1, SynthesisReport). The LMI program
    uses the n_c-point grid; the shipped set carries a refined steady-state
    grid so that curvature interpolation error stays negligible during
    verification and online terminal-law evaluation.
    """
    grid = []
    for c in cfg.curvature_grid():
        try:
            grid.append(compute_steady_state(c, cfg.v_x_target, p, cfg.Ts))
        except SteadyStateError as e:
            raise SynthesisError(f"steady-state stage failed: {e}") from e

    lins = [linearize_relative(ss, p, cfg.Ts) for ss in grid]
    models = [(lin.A, lin.B, lin.steady_state.x_r_e, lin.steady_state.u_e)
              for lin in lins]
    P, K, info = synthesize_from_models(models, cfg, cfg.dissipation_margin)
    P, K = _symmetrize_mirror(P, K)

    def residuals(P_, K_):
        return np.array([check_lyapunov_decrease(P_, K_, lin.A, lin.B, cfg.Q, cfg.R)
                         for lin in lins])

    lyap = residuals(P, K)
    if lyap.max() > -0.25 * cfg.dissipation_margin:
        # first-choice solver returned an insufficiently feasible point
        P, K, info = synthesize_from_models(models, cfg, cfg.dissipation_margin,
                                            force_solver="SCS")
        lyap = residuals(P, K)
        if lyap.max() > 0:
            raise SynthesisError(
                f"dissipation LMI violated by {lyap.max():.2e} after solving with "
                "both conic solvers; weaken Q/R or reduce c_max")
    contain = np.array([_containment_residual(P, K, ss, cfg) for ss in grid])
    ss_res = np.array([np.linalg.norm(relative_step(ss.x_r_e, ss.u_e, ss.c, p, cfg.Ts)
                                      - ss.x_r_e) for ss in grid])

    if cfg.interp_refine > 1:
        dense = np.linspace(-cfg.c_max, cfg.c_max,
                            cfg.interp_refine * (cfg.n_c - 1) + 1)
        grid_out = [compute_steady_state(c, cfg.v_x_target, p, cfg.Ts) for c in dense]
    else:
        grid_out = grid

    u_lb = np.array([-cfg.delta_max, cfg.tau_min])
    u_ub = np.array([cfg.delta_max, cfg.tau_max])
    ts = TerminalSet(P, K, 1.0, grid_out, cfg.v_x_target, cfg.Ts, u_lb, u_ub,
                     provenance={"config_digest": cfg.digest(), "solver": info["solver"],
                                 "n_c": cfg.n_c})
    report = SynthesisReport(lyap, contain, ss_res, info["solve_time"], info["solver"])
    return ts, report


_MIRROR_X = np.diag([-1.0, -1.0, 1.0, -1.0, -1.0])   # left/right track mirror
_MIRROR_U = np.diag([-1.0, 1.0])


def _symmetrize_mirror(P, K):
    """Average (E, Y) with their mirror images.

    The grid, polytopes, and dynamics are all mirror-symmetric, so the
    mirrored solution is feasible with the same objective; averaging (the
    feasible set is convex in (E, Y)) removes solver asymmetry and makes
    closed-loop behavior at +/-c mirror exactly.
    """
    E = np.linalg.inv(P)
    Y = K @ E
    E = 0.5 * (E + _MIRROR_X @ E @ _MIRROR_X)
    Y = 0.5 * (Y + _MIRROR_U @ Y @ _MIRROR_X)
    P_out = np.linalg.inv(E)
    P_out = 0.5 * (P_out + P_out.T)
    return P_out, Y @ P_out


def _containment_residual(P, K, ss: SteadyState, cfg: SynthesisConfig) -> float:
    """Worst signed margin of the closed-form support-function checks.

    For each row, margin = (h_j - H_j x_e) - sqrt(H_j E H_j'); negative means
    the unit ellipsoid pokes out of the constraint.
    """
    E = np.linalg.inv(P)
    worst = np.inf
    for j in range(cfg.H.shape[0]):
        margin = (cfg.h[j] - cfg.H[j] @ ss.x_r_e) - np.sqrt(cfg.H[j] @ E @ cfg.H[j])
        worst = min(worst, margin)
    GK = cfg.G @ K
    for l in range(cfg.G.shape[0]):
        margin = (cfg.g[l] - cfg.G[l] @ ss.u_e) - np.sqrt(GK[l] @ E @ GK[l])
        worst = min(worst, margin)
    return float(worst)


def _sample_ellipsoid(rng, P, alpha, n):
    """Half on the boundary, half volume-uniform inside."""
    dim = P.shape[0]
    L = np.linalg.cholesky(P)
    z = rng.standard_normal((n, dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    radius = np.ones(n)
    interior = rng.random(n // 2) ** (1.0 / dim)
    radius[: n // 2] = interior
    w = np.sqrt(alpha) * z * radius[:, None]
    return np.linalg.solve(L.T, w.T).T


def _closed_loop_value(ts: TerminalSet, p: VehicleParams, xbar, c):
    """Objective x+' P x+ of the saturated terminal law, batched."""
    xe, ue = ts.steady_state_at(c)
    u = np.clip(ue + xbar @ ts.K.T, ts.u_lb, ts.u_ub)
    x_next = relative_step(xe + xbar, u, c, p, ts.Ts)
    dx = x_next - xe
    return np.einsum("ij,jk,ik->i", dx, ts.P, dx), dx, u


def verify_nonlinear(ts: TerminalSet, p: VehicleParams,
                     cfg: SynthesisConfig) -> VerificationReport:
    """Multi-start projected gradient ascent on the invariance objective.

    Each start is a state sampled on/in the scaled ellipsoid and a curvature
    sampled uniformly in the certified range; ascent maximizes the next-step
    ellipsoid value subject to staying in the set and the curvature interval.
    All starts march in one batched iteration.
    """
    rng = np.random.default_rng(cfg.seed)
    n = int(cfg.n_verify_starts)
    if n <= 0:
        raise ValueError("n_verify_starts must be positive")
    c_lo, c_hi = ts.c_range

    xbar = _sample_ellipsoid(rng, ts.P, ts.alpha, n)
    c = rng.uniform(c_lo, c_hi, n)

    def project(xb):
        val = np.einsum("ij,jk,ik->i", xb, ts.P, xb)
        scale = np.minimum(1.0, np.sqrt(ts.alpha / np.maximum(val, 1e-300)))
        return xb * scale[:, None]

    xbar = project(xbar)
    obj, _, _ = _closed_loop_value(ts, p, xbar, c)
    step = np.full(n, 0.02)
    h_c = 1e-6

    for _ in range(int(cfg.verify_iters)):
        xe, ue = ts.steady_state_at(c)
        u_raw = ue + xbar @ ts.K.T
        u = np.clip(u_raw, ts.u_lb, ts.u_ub)
        live = ((u_raw > ts.u_lb) & (u_raw < ts.u_ub)).astype(float)
        A, B = relative_step_jacobians(xe + xbar, u, c, p, ts.Ts)
        _, dx_next, _ = _closed_loop_value(ts, p, xbar, c)
        Pdx = dx_next @ ts.P
        # d(obj)/d(xbar) = 2 (A + B * diag(live) K)' P dx+
        Keff = live[:, :, None] * ts.K[None, :, :]
        J = A + np.einsum("bij,bjk->bik", B, Keff)
        grad_x = 2.0 * np.einsum("bij,bi->bj", J, Pdx)

        obj_cp, _, _ = _closed_loop_value(ts, p, xbar, np.clip(c + h_c, c_lo, c_hi))
        obj_cm, _, _ = _closed_loop_value(ts, p, xbar, np.clip(c - h_c, c_lo, c_hi))
        grad_c = (obj_cp - obj_cm) / (2 * h_c)

        norm = np.sqrt(np.einsum("ij,ij->i", grad_x, grad_x) + grad_c**2) + 1e-30
        cand_x = project(xbar + (step / norm)[:, None] * grad_x)
        cand_c = np.clip(c + step / norm * grad_c, c_lo, c_hi)
        cand_obj, _, _ = _closed_loop_value(ts, p, cand_x, cand_c)

        improved = cand_obj > obj
        xbar[improved] = cand_x[improved]
        c[improved] = cand_c[improved]
        obj[improved] = cand_obj[improved]
        step = np.where(improved, np.minimum(step * 1.3, 0.5), step * 0.5)
        step = np.maximum(step, 1e-12)

    worst = int(np.argmax(obj))
    return VerificationReport(
        worst_objective=float(obj[worst]),
        worst_state=xbar[worst].copy(),
        worst_curvature=float(c[worst]),
        n_starts=n,
        alpha=ts.alpha,
        verified=bool(obj[worst] <= ts.alpha + 1e-12),
    )


def shrink_until_verified(ts: TerminalSet, p: VehicleParams,
                          cfg: SynthesisConfig) -> TerminalSet:
    """Scale alpha down by shrink_factor until verification passes."""
    current = ts
    while True:
        report = verify_nonlinear(current, p, cfg)
        if report.verified:
            prov = dict(current.provenance)
            prov["verification"] = report.to_dict()
            return TerminalSet(current.P, current.K, current.alpha, current.grid,
                               current.v_x_target, current.Ts, current.u_lb,
                               current.u_ub, prov)
        new_alpha = current.alpha * cfg.shrink_factor
        if new_alpha < cfg.alpha_min:
            raise SynthesisError(
                f"terminal set collapsed: alpha {new_alpha:.2e} fell below "
                f"{cfg.alpha_min} without passing verification "
                f"(worst objective {report.worst_objective:.4f} at "
                f"c={report.worst_curvature:.3f})")
        current = current.scaled(new_alpha)
