"""Online predictive safety filter.

Each control cycle builds a horizon problem in curvilinear coordinates
[s, e_lat, mu, vx, vy, r]: stage curvature frozen at the warm trajectory's
progress, front-corner and heading-error rows soft, input box hard, and a
soft terminal membership row for the invariant set at the lookahead
curvature. One real-time-iteration SQP pass yields the applied input; the
cost tracks the desired input and penalizes input rate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .ocp import SqpSettings, StageProblem, Solution, shift_warm_start, sqp_step
from .qp import QpResult
from .relative import (CurvatureSingularity, curvilinear_step,
                       curvilinear_step_jacobians, curvilinear_step_scalar)
from .terminal import TerminalSet
from .track import (LookaheadConfig, ProjectionError, Track,
                    TrackRelativeState, lookahead_curvature)
from .vehicle import ControlInput, VehicleParams, VehicleState


@dataclass
class FilterConfig:
    N: int = 60
    Ts: float = 0.0125
    W: np.ndarray = field(default_factory=lambda: np.diag([100.0, 100.0]))
    R_S: np.ndarray = field(default_factory=lambda: np.diag([1.0, 1.0]))
    delta_max: float = 0.40
    tau_min: float = -1.0
    tau_max: float = 1.0
    mu_max: float = float(np.pi / 2)
    vx_floor: float = 0.9   # backup plans never slow below controllable speed
    corner_margin: float = 0.06  # fraction of t held back from the soft rows,
                                 # absorbing single-iteration SQP inexactness
    track_soft_lam: float = 1e4
    track_soft_rho: float = 1e3
    terminal_soft_lam: float = 1e5
    terminal_soft_rho: float = 1e4
    cert_tol: float = 1e-3
    lookahead: LookaheadConfig = field(default_factory=LookaheadConfig)
    sqp: SqpSettings = field(default_factory=lambda: SqpSettings(
        step_trust=np.array([0.075, 0.25]), rollout_gap=0.05, qp_max_iters=18,
        row_screen=0.5))
    cold_qp_iters: int = 300   # first call only; warm cycles use qp_max_iters

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.R_S = np.asarray(self.R_S, dtype=float)
        w_min = np.linalg.eigvalsh(self.W).min()
        if w_min <= 0:
            raise ValueError("W must be positive definite")
        if w_min < 10.0 * np.linalg.eigvalsh(self.R_S).max():
            raise ValueError("input-deviation weight W must dominate the "
                             "rate weight R_S (min eig W >= 10 max eig R_S)")

    @property
    def u_lb(self) -> np.ndarray:
        return np.array([-self.delta_max, self.tau_min])

    @property
    def u_ub(self) -> np.ndarray:
        return np.array([self.delta_max, self.tau_max])


@dataclass
class FilterResult:
    u_applied: ControlInput
    intervention: float
    certified: bool
    trajectory: np.ndarray | None     # (N+1, 6) curvilinear backup plan
    max_slack: float
    terminal_value: float
    status: str
    solve_time: float
    degraded: bool = False
    rel: TrackRelativeState | None = None


def intervention_norm(u_d: ControlInput, u: ControlInput) -> float:
    """L2 distance between desired and applied input vectors."""
    return float(np.hypot(u_d.delta - u.delta, u_d.tau - u.tau))


class SafetyFilter:
    """Stateful per-vehicle filter; call filter_step once per control period.

    Owns the solver warm start and the previously applied input. Not thread
    safe by design: one control thread drives it, results are value types.
    """

    def __init__(self, track: Track, params: VehicleParams,
                 terminal_set: TerminalSet, config: FilterConfig | None = None):
        self.track = track
        self.params = params
        self.terminal_set = terminal_set
        self.config = config or FilterConfig()
        if track.max_curvature > max(abs(c) for c in terminal_set.c_range) + 1e-12:
            raise ValueError("track curvature exceeds the terminal set's "
                             "certified range")
        self.prev_solution: Solution | None = None
        self.u_prev: np.ndarray | None = None   # set on first filter_step
        self.s_hint: float | None = None

    def reset(self) -> None:
        self.prev_solution = None
        self.u_prev = None
        self.s_hint = None

    # -- problem assembly ----------------------------------------------------

    def _stage_rows(self, xs):
        """Soft rows at stages 1..N: corner errors vs half-width, |mu| bound,
        and the minimum planning speed."""
        p = self.params
        t = self.track.half_width * (1.0 - self.config.corner_margin)
        mu = xs[:, 2]
        smu, cmu = np.sin(mu), np.cos(mu)
        e_lf = xs[:, 1] + p.lf * smu + 0.5 * p.w * cmu
        e_rf = xs[:, 1] + p.lf * smu - 0.5 * p.w * cmu
        n = xs.shape[0]
        vals = np.empty((n, 7))
        vals[:, 0] = e_lf - t
        vals[:, 1] = -e_lf - t
        vals[:, 2] = e_rf - t
        vals[:, 3] = -e_rf - t
        vals[:, 4] = mu - self.config.mu_max
        vals[:, 5] = -mu - self.config.mu_max
        vals[:, 6] = self.config.vx_floor - xs[:, 3]
        jac = np.zeros((n, 7, 6))
        d_lf = p.lf * cmu - 0.5 * p.w * smu
        d_rf = p.lf * cmu + 0.5 * p.w * smu
        jac[:, 0, 1] = 1.0
        jac[:, 0, 2] = d_lf
        jac[:, 1, 1] = -1.0
        jac[:, 1, 2] = -d_lf
        jac[:, 2, 1] = 1.0
        jac[:, 2, 2] = d_rf
        jac[:, 3, 1] = -1.0
        jac[:, 3, 2] = -d_rf
        jac[:, 4, 2] = 1.0
        jac[:, 5, 2] = -1.0
        jac[:, 6, 3] = -1.0
        return vals, jac

    def _build_problem(self, x0, u_d, warm_s, c_f):
        cfg = self.config
        c_sched = self.track.curvatures_at(warm_s[:cfg.N])
        ts = self.terminal_set
        x_e, _ = ts.steady_state_at(c_f)
        P, alpha = ts.P, ts.alpha

        def dynamics(i0, xs, us):
            c = c_sched[i0:i0 + xs.shape[0]]
            nxt = curvilinear_step(xs, us, c, self.params, cfg.Ts)
            A, B = curvilinear_step_jacobians(xs, us, c, self.params, cfg.Ts)
            return nxt, A, B

        def step(i, x, u):
            return curvilinear_step_scalar(x, u, c_sched[i], self.params, cfg.Ts)

        def terminal(xN):
            dx = xN[1:] - x_e
            Pdx = P @ dx
            val = float(dx @ Pdx) - alpha
            grad = np.zeros(6)
            grad[1:] = 2.0 * Pdx
            return val, grad

        R = np.zeros((cfg.N, 2, 2))
        R[0] = cfg.W
        u_ref = np.zeros((cfg.N, 2))
        u_ref[0] = u_d
        return StageProblem(
            N=cfg.N, n=6, m=2, x0=x0, dynamics=dynamics, step=step,
            u_lb=cfg.u_lb, u_ub=cfg.u_ub,
            stage_constraints=self._stage_rows,
            stage_soft_lam=np.full(7, cfg.track_soft_lam),
            stage_soft_rho=np.full(7, cfg.track_soft_rho),
            terminal_constraint=terminal,
            terminal_soft_lam=cfg.terminal_soft_lam,
            terminal_soft_rho=cfg.terminal_soft_rho,
            R=R, u_ref=u_ref,
            R_rate=np.broadcast_to(cfg.R_S, (cfg.N, 2, 2)).copy(),
            u_prev=self.u_prev.copy() if self.u_prev is not None else None,
        )

    def _warm_solution(self, x0, c0) -> Solution:
        if self.prev_solution is not None:
            return shift_warm_start(self.prev_solution, x0)
        # cold start: hold the steady input for the current curvature
        _, u_e = self.terminal_set.steady_state_at(
            float(np.clip(c0, *self.terminal_set.c_range)))
        us = np.tile(np.clip(u_e, self.config.u_lb, self.config.u_ub),
                     (self.config.N, 1))
        xs = np.empty((self.config.N + 1, 6))
        xs[0] = x0
        c_here = c0
        for i in range(self.config.N):
            xs[i + 1] = curvilinear_step_scalar(xs[i], us[i], c_here, self.params,
                                                self.config.Ts)
            c_here = self.track.curvature_at(xs[i + 1, 0])
        return Solution(xs, us, qp_status="cold")

    # -- fallbacks -----------------------------------------------------------

    def _fallback(self, rel: TrackRelativeState | None, reason: str) -> FilterResult:
        """Degraded modes: leftover plan, then terminal law, then braking."""
        cfg = self.config
        if (self.prev_solution is not None and self.prev_solution.us.shape[0] >= 2
                and np.all(np.isfinite(self.prev_solution.us))):
            u = self.prev_solution.us[1]
            status = f"degraded-warm ({reason})"
            self.prev_solution = shift_warm_start(
                self.prev_solution, self.prev_solution.xs[1])
        elif rel is not None:
            c = float(np.clip(self.track.curvatures_at(rel.s),
                              *self.terminal_set.c_range))
            u = self.terminal_set.terminal_law(rel.as_array(), c)
            status = f"degraded-terminal-law ({reason})"
            self.prev_solution = None
        else:
            u = np.array([0.0, cfg.tau_min])
            status = f"degraded-brake ({reason})"
            self.prev_solution = None
        u = np.clip(u, cfg.u_lb, cfg.u_ub)
        self.u_prev = np.asarray(u, dtype=float).copy()
        return FilterResult(
            u_applied=ControlInput.from_array(u), intervention=np.nan,
            certified=False, trajectory=None, max_slack=np.nan,
            terminal_value=np.nan, status=status, solve_time=0.0,
            degraded=True, rel=rel)

    # -- main entry ----------------------------------------------------------

    def filter_step(self, state: VehicleState, u_d: ControlInput,
                    rel: TrackRelativeState | None = None) -> FilterResult:
        t0 = time.perf_counter()
        cfg = self.config
        if rel is None:
            try:
                rel = self.track.global_to_relative(state, s_hint=self.s_hint)
            except ProjectionError:
                return self._fallback(None, "projection failed")
        self.s_hint = rel.s

        x0 = np.array([rel.s, rel.e_lat, rel.mu, rel.vx, rel.vy, rel.r])
        u_d_arr = np.clip(u_d.as_array(), cfg.u_lb, cfg.u_ub)
        if self.u_prev is None:
            # no previously applied input: anchor the rate term at the desire
            self.u_prev = u_d_arr.copy()
        c_f = float(np.clip(
            lookahead_curvature(self.track, rel.s, u_d_arr[1],
                                cfg.N * cfg.Ts, cfg.lookahead),
            *self.terminal_set.c_range))

        try:
            cold = self.prev_solution is None
            warm = self._warm_solution(x0, self.track.curvature_at(rel.s))
            problem = self._build_problem(x0, u_d_arr, warm.xs[:, 0], c_f)
            settings = cfg.sqp
            if cold:
                settings = replace(cfg.sqp, qp_max_iters=cfg.cold_qp_iters)
            sol = sqp_step(problem, warm, settings)
            if not (np.all(np.isfinite(sol.us)) and np.all(np.isfinite(sol.xs))):
                self.prev_solution = None
                return self._fallback(rel, "non-finite solution")
        except (CurvatureSingularity, np.linalg.LinAlgError) as e:
            return self._fallback(rel, type(e).__name__)

        self.prev_solution = sol
        u0 = np.clip(sol.us[0], cfg.u_lb, cfg.u_ub)
        self.u_prev = u0.copy()
        u_applied = ControlInput.from_array(u0)
        inter = intervention_norm(u_d, u_applied)

        term_val = float((sol.xs[-1, 1:] - self.terminal_set.steady_state_at(c_f)[0])
                         @ self.terminal_set.P
                         @ (sol.xs[-1, 1:] - self.terminal_set.steady_state_at(c_f)[0]))
        max_slack = float(sol.stage_slack.max()) if sol.stage_slack is not None else 0.0
        return FilterResult(
            u_applied=u_applied,
            intervention=inter,
            certified=inter <= cfg.cert_tol,
            trajectory=sol.xs.copy(),
            max_slack=max(max_slack, sol.terminal_slack),
            terminal_value=term_val,
            status=sol.qp_status,
            solve_time=time.perf_counter() - t0,
            degraded=False,
            rel=rel,
        )
