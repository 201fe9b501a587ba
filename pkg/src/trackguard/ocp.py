"""Stage-wise nonlinear optimal control via real-time-iteration SQP.

One ``sqp_step`` performs a single linearize-then-QP pass in multiple
shooting form: dynamics are linearized at the warm trajectory, the state
sequence is condensed onto the input sequence, soft inequality rows become
L1+L2 penalties, and the dense subproblem goes to the penalty QP solver.
No line search or globalization; stability comes from warm starting at a
high rate, which is the real-time-iteration contract.

Cost convention (no 1/2 factors):

    J = sum_i (x_i - xref_i)' Q_i (x_i - xref_i)
      + sum_i (u_i - uref_i)' R_i (u_i - uref_i)
      + sum_i du_i' Rr_i du_i,   du_0 = u_0 - u_prev

Soft rows c(x) <= 0 are penalized as lam*s + rho*s^2 with s = max(c, 0).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .qp import solve_penalty_qp


@dataclass
class SqpSettings:
    max_sqp_iters: int = 1        # 1 = real-time iteration
    qp_max_iters: int = 60        # best iterate is returned when exhausted
    reg: float = 1e-6             # Gauss-Newton Hessian regularization
    dyn_tol: float = 1e-8         # multiple-shooting gap at convergence
    step_trust: np.ndarray | None = None   # per-input |du| bound per RTI pass
    rollout_gap: float = np.inf   # shooting gap beyond which the linear state
                                  # update is replaced by a nonlinear rollout
    qp_pin_band: float = 0.0      # eager kink-pinning band for the QP
    row_screen: float = np.inf    # soft rows with margin beyond this are
                                  # dropped from the subproblem (conservative)


@dataclass
class StageProblem:
    """Horizon problem description with batch callbacks.

    dynamics(i0, xs, us): starting stage index plus (k,n),(k,m) batches ->
        x_next (k,n), A (k,n,n), B (k,n,m); sqp_step calls it with the whole
        horizon (i0 = 0), rollouts call it stage by stage
    stage_constraints(xs): values/Jacobians of soft rows at stages 1..N,
        (N,n) -> vals (N,p), jac (N,p,n); rows are c <= 0
    terminal_constraint(xN): (n,) -> (val, grad); soft scalar row c <= 0
    """

    N: int
    n: int
    m: int
    x0: np.ndarray
    dynamics: callable
    u_lb: np.ndarray
    u_ub: np.ndarray
    step: callable | None = None   # light dynamics without Jacobians (rollouts)
    stage_constraints: callable | None = None
    stage_soft_lam: np.ndarray | None = None   # (p,)
    stage_soft_rho: np.ndarray | None = None
    terminal_constraint: callable | None = None
    terminal_soft_lam: float = 0.0
    terminal_soft_rho: float = 0.0
    Q: np.ndarray | None = None        # (N+1, n, n)
    x_ref: np.ndarray | None = None    # (N+1, n)
    R: np.ndarray | None = None        # (N, m, m)
    u_ref: np.ndarray | None = None    # (N, m)
    R_rate: np.ndarray | None = None   # (N, m, m)
    u_prev: np.ndarray | None = None   # (m,), anchors du_0

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.u_lb = np.broadcast_to(np.asarray(self.u_lb, dtype=float),
                                    (self.N, self.m)).copy()
        self.u_ub = np.broadcast_to(np.asarray(self.u_ub, dtype=float),
                                    (self.N, self.m)).copy()


@dataclass
class Solution:
    xs: np.ndarray                 # (N+1, n)
    us: np.ndarray                 # (N, m)
    objective: float = np.nan
    qp_status: str = "cold"
    kkt_residual: float = np.inf
    dyn_residual: float = np.inf
    stage_slack: np.ndarray | None = None   # (N, p)
    terminal_slack: float = 0.0
    step_norm: float = np.inf
    solve_time: float = 0.0


def cold_start(problem: StageProblem) -> Solution:
    """All-zero inputs plus a rollout of the dynamics from x0."""
    us = np.zeros((problem.N, problem.m))
    us = np.clip(us, problem.u_lb, problem.u_ub)
    xs = rollout(problem, us)
    return Solution(xs, us, qp_status="cold")


def rollout(problem: StageProblem, us: np.ndarray) -> np.ndarray:
    xs = np.empty((problem.N + 1, problem.n))
    xs[0] = problem.x0
    if problem.step is not None:
        for i in range(problem.N):
            xs[i + 1] = problem.step(i, xs[i], us[i])
    else:
        for i in range(problem.N):
            nxt, _, _ = problem.dynamics(i, xs[i:i + 1], us[i:i + 1])
            xs[i + 1] = nxt[0]
    return xs


def shift_warm_start(sol: Solution, new_x0) -> Solution:
    """Shift one stage, duplicate the last, pin the initial state."""
    xs = np.vstack([sol.xs[1:], sol.xs[-1:]])
    us = np.vstack([sol.us[1:], sol.us[-1:]])
    xs[0] = np.asarray(new_x0, dtype=float)
    return Solution(xs, us, qp_status="shifted")


def objective_value(problem: StageProblem, xs, us) -> float:
    J = 0.0
    if problem.Q is not None:
        e = xs - (problem.x_ref if problem.x_ref is not None else 0.0)
        J += np.einsum("in,inm,im->", e, problem.Q, e)
    if problem.R is not None:
        e = us - (problem.u_ref if problem.u_ref is not None else 0.0)
        J += np.einsum("in,inm,im->", e, problem.R, e)
    if problem.R_rate is not None:
        prev = problem.u_prev if problem.u_prev is not None else us[0]
        du = np.diff(np.vstack([prev[None, :], us]), axis=0)
        J += np.einsum("in,inm,im->", du, problem.R_rate, du)
    return float(J)


def sqp_step(problem: StageProblem, warm: Solution | None = None,
             settings: SqpSettings = SqpSettings()) -> Solution:
    """One full Newton-type (Gauss-Newton) RTI pass."""
    t0 = time.perf_counter()
    if warm is None:
        warm = cold_start(problem)
    N, n, m = problem.N, problem.n, problem.m
    K = N * m
    xs_bar = np.asarray(warm.xs, dtype=float)
    us_bar = np.clip(np.asarray(warm.us, dtype=float), problem.u_lb, problem.u_ub)

    x_next, A, B = problem.dynamics(0, xs_bar[:-1], us_bar)
    defects = x_next - xs_bar[1:]

    # condense: dx_i = Phi_i + Gamma_i dU
    Gamma = np.zeros((N + 1, n, K))
    Phi = np.zeros((N + 1, n))
    Phi[0] = problem.x0 - xs_bar[0]
    for i in range(N):
        end = i * m
        if end:
            Gamma[i + 1, :, :end] = A[i] @ Gamma[i, :, :end]
        Gamma[i + 1, :, end:end + m] = B[i]
        Phi[i + 1] = A[i] @ Phi[i] + defects[i]

    Hhat = np.zeros((K, K))
    ghat = np.zeros(K)

    if problem.Q is not None:
        ref = problem.x_ref if problem.x_ref is not None else np.zeros((N + 1, n))
        e0 = xs_bar + Phi - ref
        QG = np.einsum("inm,imK->inK", problem.Q, Gamma)
        Hhat += np.einsum("inK,inL->KL", Gamma, QG)
        ghat += np.einsum("inK,in->K", QG, e0)

    if problem.R is not None:
        ref = problem.u_ref if problem.u_ref is not None else np.zeros((N, m))
        for i in range(N):
            sl = slice(i * m, (i + 1) * m)
            Hhat[sl, sl] += problem.R[i]
            ghat[sl] += problem.R[i] @ (us_bar[i] - ref[i])

    if problem.R_rate is not None:
        prev = problem.u_prev if problem.u_prev is not None else us_bar[0]
        du_bar = np.diff(np.vstack([prev[None, :], us_bar]), axis=0)
        for i in range(N):
            Rr = problem.R_rate[i]
            sl_i = slice(i * m, (i + 1) * m)
            Hhat[sl_i, sl_i] += Rr
            ghat[sl_i] += Rr @ du_bar[i]
            if i > 0:
                sl_p = slice((i - 1) * m, i * m)
                Hhat[sl_p, sl_p] += Rr
                Hhat[sl_i, sl_p] -= Rr
                Hhat[sl_p, sl_i] -= Rr
                ghat[sl_p] -= Rr @ du_bar[i]

    H_qp = 2.0 * Hhat + settings.reg * np.eye(K)
    g_qp = 2.0 * ghat

    # soft rows: stage constraints at stages 1..N, then the terminal row
    rows, rhs, lam_rows, rho_rows = [], [], [], []
    p_rows = 0
    if problem.stage_constraints is not None:
        vals, jac = problem.stage_constraints(xs_bar[1:])
        p_rows = vals.shape[1]
        Crows = np.einsum("ipn,inK->ipK", jac, Gamma[1:]).reshape(N * p_rows, K)
        drows = -(vals + np.einsum("ipn,in->ip", jac, Phi[1:])).reshape(N * p_rows)
        rows.append(Crows)
        rhs.append(drows)
        lam_rows.append(np.tile(problem.stage_soft_lam, N))
        rho_rows.append(np.tile(problem.stage_soft_rho, N))
    if problem.terminal_constraint is not None:
        val, grad = problem.terminal_constraint(xs_bar[N] + Phi[N])
        rows.append((grad @ Gamma[N])[None, :])
        rhs.append(np.array([-(val)]))
        lam_rows.append(np.array([problem.terminal_soft_lam]))
        rho_rows.append(np.array([problem.terminal_soft_rho]))

    C = np.vstack(rows) if rows else None
    d = np.concatenate(rhs) if rows else None
    lam = np.concatenate(lam_rows) if rows else None
    # spec penalty is lam*s + rho*s^2; the solver uses 0.5*rho*s^2
    rho = 2.0 * np.concatenate(rho_rows) if rows else None
    keep_rows = None
    if C is not None and np.isfinite(settings.row_screen):
        keep_rows = d <= settings.row_screen
        if not keep_rows.all():
            C, d, lam, rho = C[keep_rows], d[keep_rows], lam[keep_rows], rho[keep_rows]

    lb = (problem.u_lb - us_bar).ravel()
    ub = (problem.u_ub - us_bar).ravel()
    if settings.step_trust is not None:
        trust = np.broadcast_to(np.asarray(settings.step_trust, dtype=float),
                                (N, m)).ravel()
        lb = np.maximum(lb, -trust)
        ub = np.minimum(ub, trust)
    res = solve_penalty_qp(H_qp, g_qp, lb, ub, C, d, lam, rho,
                           max_iter=settings.qp_max_iters,
                           pin_band=settings.qp_pin_band)

    dU = res.x
    us = us_bar + dU.reshape(N, m)
    xs = xs_bar + Phi + Gamma @ dU

    x_chk, _, _ = problem.dynamics(0, xs[:-1], us)
    dyn_res = float(np.abs(x_chk - xs[1:]).max(initial=0.0))
    if not np.isfinite(dyn_res) or dyn_res > settings.rollout_gap:
        # linear update left the linearization's validity region; fall back
        # to the physically consistent rollout of the new inputs
        xs = rollout(problem, us)
        dyn_res = 0.0

    stage_slack = None
    term_slack = 0.0
    if res.slack is not None and res.slack.size:
        s = res.slack
        if keep_rows is not None:
            full = np.zeros(keep_rows.size)
            full[keep_rows] = s
            s = full
        if problem.terminal_constraint is not None:
            term_slack = float(s[-1])
            s = s[:-1]
        if p_rows:
            stage_slack = s.reshape(N, p_rows)

    sol = Solution(
        xs=xs, us=us,
        objective=objective_value(problem, xs, us),
        qp_status=res.status,
        kkt_residual=max(res.kkt_residual, dyn_res),
        dyn_residual=dyn_res,
        stage_slack=stage_slack,
        terminal_slack=term_slack,
        step_norm=float(np.abs(dU).max(initial=0.0)),
        solve_time=time.perf_counter() - t0,
    )
    return sol


def solve_to_convergence(problem: StageProblem, warm: Solution | None = None,
                         settings: SqpSettings = SqpSettings(),
                         max_iters: int = 30) -> Solution:
    """Repeat sqp_step until the step norm stalls; offline/testing helper."""
    sol = warm
    for _ in range(max_iters):
        sol = sqp_step(problem, sol, settings)
        if sol.step_norm <= 1e-10 and sol.dyn_residual <= settings.dyn_tol:
            break
    return sol
