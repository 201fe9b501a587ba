"""Dense convex QP solvers.

Two entry points:

* ``solve_qp`` -- general equality/inequality QP via a dual active-set
  iteration (Lawson-Hanson style on the negative dual). Direct KKT solves
  give machine-precision complementarity on the small dense problems this
  package produces.

* ``solve_penalty_qp`` -- box-constrained QP plus one-sided soft rows with
  L1+L2 penalties, minimized by a primal active-set method on the
  piecewise-quadratic objective. This is the real-time path: the penalty
  form is the slack-variable QP with the slacks eliminated in closed form,
  so its solutions coincide with ``solve_qp`` on the lifted problem.

Both are single-threaded and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

_BIG_DUAL = 1e9
_KINK_TOL = 1e-11


@dataclass
class QpResult:
    x: np.ndarray
    status: str                      # 'optimal' | 'max_iterations' | 'infeasible'
    dual_eq: np.ndarray | None = None
    dual_in: np.ndarray | None = None
    kkt_residual: float = np.inf
    iterations: int = 0
    objective: float = np.nan
    slack: np.ndarray | None = None  # penalty path only


def _kkt_residual(H, g, x, A_eq, b_eq, nu, A_in, b_in, lam):
    """Max-norm stationarity / feasibility / complementarity residual."""
    r_stat = H @ x + g
    if A_eq is not None:
        r_stat = r_stat + A_eq.T @ nu
    if A_in is not None:
        r_stat = r_stat + A_in.T @ lam
    parts = [np.abs(r_stat).max() if r_stat.size else 0.0]
    if A_eq is not None and A_eq.size:
        parts.append(np.abs(A_eq @ x - b_eq).max())
    if A_in is not None and A_in.size:
        viol = A_in @ x - b_in
        parts.append(max(viol.max(initial=0.0), 0.0))
        parts.append(np.abs(lam * viol).max())
        parts.append(max((-lam).max(initial=0.0), 0.0))
    return float(max(parts))


def solve_qp(H, g, A_eq=None, b_eq=None, A_in=None, b_in=None,
             tol: float = 1e-10, max_iter: int = 500) -> QpResult:
    """Minimize 0.5 x'Hx + g'x  s.t.  A_eq x = b_eq, A_in x <= b_in.

    Requires H positive definite (callers regularize). Returns a primal-dual
    point; infeasibility is reported through the status, never raised.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    g = np.atleast_1d(np.asarray(g, dtype=float))
    n = g.size
    if A_eq is not None and np.size(A_eq):
        A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
        b_eq = np.atleast_1d(np.asarray(b_eq, dtype=float))
    else:
        A_eq, b_eq = None, None
    if A_in is not None and np.size(A_in):
        A_in = np.atleast_2d(np.asarray(A_in, dtype=float))
        b_in = np.atleast_1d(np.asarray(b_in, dtype=float))
    else:
        A_in, b_in = None, None

    try:
        Hf = cho_factor(H, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise ValueError("H must be positive definite") from e

    if A_eq is None and A_in is None:
        x = cho_solve(Hf, -g, check_finite=False)
        return QpResult(x, "optimal", np.zeros(0), np.zeros(0),
                        _kkt_residual(H, g, x, None, None, None, None, None, None),
                        0, 0.5 * x @ H @ x + g @ x)

    if A_eq is not None:
        # inconsistent equality system: b_eq outside the range of A_eq
        sol, _, rank, _ = np.linalg.lstsq(A_eq, b_eq, rcond=None)
        if rank < A_eq.shape[0]:
            gap = np.abs(A_eq @ sol - b_eq).max()
            if gap > 1e-8 * max(1.0, np.abs(b_eq).max()):
                return QpResult(np.full(n, np.nan), "infeasible", iterations=0)

    parts = [p for p in (A_eq, A_in) if p is not None]
    A = np.vstack(parts)
    b = np.concatenate([p for p in (b_eq, b_in) if p is not None])
    m_eq = A_eq.shape[0] if A_eq is not None else 0
    m = A.shape[0]

    # negative dual: min 0.5 mu' D mu + d' mu,  mu[:m_eq] free, mu[m_eq:] >= 0
    D = A @ cho_solve(Hf, A.T, check_finite=False)
    d = A @ cho_solve(Hf, g, check_finite=False) + b

    mu = np.zeros(m)
    passive = np.zeros(m, dtype=bool)
    passive[:m_eq] = True
    reg = 1e-13 * max(np.trace(D) / max(m, 1), 1.0)
    scale = 1.0 + np.abs(b).max(initial=0.0)

    def reduce_to_passive():
        """Solve on the passive set, backtracking to keep mu[in] >= 0."""
        nonlocal mu
        for _ in range(2 * m + 2):
            idx = np.flatnonzero(passive)
            if idx.size == 0:
                mu = np.zeros(m)
                return
            Dp = D[np.ix_(idx, idx)] + reg * np.eye(idx.size)
            try:
                sol = np.linalg.solve(Dp, -d[idx])
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(Dp, -d[idx], rcond=None)[0]
            trial = np.zeros(m)
            trial[idx] = sol
            bad = passive.copy()
            bad[:m_eq] = False
            bad &= trial < -tol
            if not bad.any():
                mu = trial
                return
            ratio = mu[bad] / (mu[bad] - trial[bad])
            alpha = min(1.0, float(ratio.min()))
            mu = mu + alpha * (trial - mu)
            drop = bad & (mu <= tol)
            mu[drop] = 0.0
            passive[drop] = False

    status = "max_iterations"
    it = 0
    for it in range(1, max_iter + 1):
        reduce_to_passive()
        if np.abs(mu).max(initial=0.0) > _BIG_DUAL * scale:
            x = -cho_solve(Hf, g + A.T @ mu, check_finite=False)
            return QpResult(x, "infeasible", mu[:m_eq].copy(), mu[m_eq:].copy(),
                            iterations=it)
        w = D @ mu + d                      # dual gradient = b - A x(mu)
        w_in = np.where(passive, np.inf, w)
        w_in[:m_eq] = np.inf
        j = int(np.argmin(w_in)) if m > m_eq else -1
        if j < 0 or w_in[j] >= -tol * scale:
            status = "optimal"
            break
        passive[j] = True

    x = -cho_solve(Hf, g + A.T @ mu, check_finite=False)
    nu, lam = mu[:m_eq], mu[m_eq:]
    kkt = _kkt_residual(H, g, x, A_eq, b_eq, nu, A_in, b_in, lam)
    return QpResult(x, status, nu, lam, kkt, it, 0.5 * x @ H @ x + g @ x)


# -- soft-penalty path ---------------------------------------------------------


def _penalty_objective(H, g, x, C, d, lam, rho):
    v = C @ x - d if C.size else np.zeros(0)
    vp = np.maximum(v, 0.0)
    pen = lam @ vp + 0.5 * rho @ vp**2 if v.size else 0.0
    return 0.5 * x @ (H @ x) + g @ x + pen, v


def _exact_line_search(p, Hx_g, H, C, lam, rho, v, Cp, alpha_max, pinned):
    """Exact minimizer of the piecewise-quadratic along x + alpha*p.

    F'(alpha) is piecewise linear with one breakpoint per non-pinned soft row
    crossing its kink; rows are sorted by crossing point and the derivative
    coefficients updated incrementally, so the scan is O(m log m). Pinned
    rows move tangentially and are skipped.
    """
    quad = float(p @ (H @ p))
    lin = float(p @ Hx_g)
    if not np.isfinite(lin) or not np.isfinite(quad):
        return 0.0

    if v.size:
        live = ~pinned
        band = 1e-11 * (1.0 + float(np.abs(v).max(initial=0.0)))
        with np.errstate(divide="ignore", invalid="ignore"):
            a_cross = np.where(live & (Cp != 0.0), -v / Cp, np.nan)
        # rows already on their violated branch at alpha = 0+, including rows
        # sitting numerically on the kink and moving into violation
        active0 = live & ((v > band) | ((v >= -band) & (Cp > 0)))
        if active0.any():
            lin += float((lam[active0] + rho[active0] * v[active0]) @ Cp[active0])
            quad += float((rho[active0] * Cp[active0]) @ Cp[active0])
        crossing = (live & np.isfinite(a_cross)
                    & (a_cross > 1e-14) & (a_cross < alpha_max)
                    & ~(active0 & (Cp > 0)))
        idx = np.flatnonzero(crossing)
        order = idx[np.argsort(a_cross[idx])]
        breaks = a_cross[order]
    else:
        order = np.zeros(0, dtype=int)
        breaks = np.zeros(0)

    lo = 0.0
    for k in range(order.size + 1):
        hi = float(breaks[k]) if k < order.size else float(alpha_max)
        if hi > lo:
            if lin + quad * lo >= 0:
                return float(lo)
            if lin + quad * hi >= 0:
                if quad <= 0:
                    return float(hi)
                return float(np.clip(-lin / quad, lo, hi))
            lo = hi
        if k < order.size:
            j = order[k]
            s = 1.0 if Cp[j] > 0 else -1.0     # entering vs leaving violation
            lin += s * float((lam[j] + rho[j] * v[j]) * Cp[j])
            quad += s * float(rho[j] * Cp[j] * Cp[j])
    return float(alpha_max)


def solve_penalty_qp(H, g, lb, ub, C=None, d=None, lam=None, rho=None,
                     x0=None, tol: float = 1e-9, max_iter: int = 40,
                     pin_band: float = 0.0) -> QpResult:
    """Box-constrained QP with one-sided soft rows.

    Minimizes 0.5 x'Hx + g'x + sum_j [lam_j max(c_j'x - d_j, 0)
    + 0.5 rho_j max(c_j'x - d_j, 0)^2] over lb <= x <= ub.

    Primal active-set iteration on the piecewise-quadratic objective: rows
    strictly violated contribute their smooth branch, rows at their kink are
    pinned as equalities with multipliers in [0, lam_j], and each iteration
    walks the box-projection arc with an exact piecewise line search, so
    descent is monotone and every exit returns the best iterate. Work per
    call is hard-bounded (two KKT solves per iteration); warm starts make
    the typical call converge in a few iterations, which is what the
    real-time caller relies on.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.size
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
    if C is None or not np.size(C):
        C = np.zeros((0, n)); d = np.zeros(0); lam = np.zeros(0); rho = np.zeros(0)
    else:
        C = np.atleast_2d(np.asarray(C, dtype=float))
        d = np.atleast_1d(np.asarray(d, dtype=float))
        lam = np.broadcast_to(np.asarray(lam, dtype=float), d.shape).astype(float)
        rho = np.broadcast_to(np.asarray(rho, dtype=float), d.shape).astype(float)
    C_full, d_full = C, d

    # rows with no dependence on x contribute a constant penalty; they would
    # also poison equilibration and make the pinned KKT singular, so drop them
    if d.size:
        norms = np.abs(C).max(axis=1)
        keep = norms > 1e-12 * max(1.0, norms.max())
        C, d, lam, rho, norms = C[keep], d[keep], lam[keep], rho[keep], norms[keep]
    m = d.size

    # row equilibration (exactly penalty-preserving): c/s, d/s, s*lam, s^2*rho
    if m:
        C = C / norms[:, None]
        d = d / norms
        lam = lam * norms
        rho = rho * norms * norms

    x = np.clip(np.zeros(n) if x0 is None else np.asarray(x0, dtype=float), lb, ub)
    obj, v = _penalty_objective(H, g, x, C, d, lam, rho)
    # rows inside the pin band are classified by their multipliers (batched)
    # instead of being discovered one line-search crossing at a time
    kink_tol = np.maximum(_KINK_TOL, pin_band) * (1.0 + np.abs(d))
    stat_tol = tol * (1.0 + np.abs(g).max(initial=0.0))
    eta = np.zeros(m)
    kkt = np.inf
    status = "max_iterations"
    it = 0

    M_cache = {"mask": np.zeros(m, dtype=bool), "M": H.copy(), "updates": 0}

    def smooth_hessian(viol):
        """H plus the violated rows' quadratic terms, updated incrementally."""
        old_mask = M_cache["mask"]
        if M_cache["updates"] > 25:          # periodic rebuild bounds drift
            M_cache["M"] = H + (C[viol].T @ (rho[viol, None] * C[viol])
                                if viol.any() else 0.0)
            M_cache["updates"] = 0
        else:
            added = viol & ~old_mask
            removed = old_mask & ~viol
            M = M_cache["M"]
            if added.any():
                Ca = C[added]
                M += Ca.T @ (rho[added, None] * Ca)
            if removed.any():
                Cr = C[removed]
                M -= Cr.T @ (rho[removed, None] * Cr)
            if added.any() or removed.any():
                M_cache["updates"] += 1
        M_cache["mask"] = viol.copy()
        return M_cache["M"]

    def direction(viol, pin, fixed):
        """Newton step with pinned rows as equalities; returns p, eta_pin.

        The smooth-branch Hessian is maintained incrementally across set
        changes, and the pinned block is handled by a small Schur complement.
        """
        vp = np.where(viol, v, 0.0)
        grad = H @ x + g
        if viol.any():
            grad = grad + C[viol].T @ (lam[viol] + rho[viol] * vp[viol])
        free = np.flatnonzero(~fixed)
        pin_idx = np.flatnonzero(pin)
        nf, nz = free.size, pin_idx.size
        if nf == 0:
            return np.zeros(n), np.zeros(nz), grad, pin_idx
        M = smooth_hessian(viol)
        Mff = M[np.ix_(free, free)]
        try:
            Mf = cho_factor(Mff, check_finite=False)
            a = cho_solve(Mf, grad[free], check_finite=False)
            if nz:
                Cz = C[np.ix_(pin_idx, free)]
                Y = cho_solve(Mf, Cz.T, check_finite=False)
                S = Cz @ Y
                try:
                    eta_p = np.linalg.solve(S, -Cz @ a)
                except np.linalg.LinAlgError:
                    eta_p, *_ = np.linalg.lstsq(S, -Cz @ a, rcond=None)
                p_f = -a - Y @ eta_p
            else:
                eta_p = np.zeros(0)
                p_f = -a
        except np.linalg.LinAlgError:
            Cz = C[np.ix_(pin_idx, free)] if nz else np.zeros((0, nf))
            K = np.zeros((nf + nz, nf + nz))
            K[:nf, :nf] = Mff
            K[:nf, nf:] = Cz.T
            K[nf:, :nf] = Cz
            rhs = np.concatenate([-grad[free], np.zeros(nz)])
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            p_f, eta_p = sol[:nf], sol[nf:]
        if not (np.all(np.isfinite(p_f)) and np.all(np.isfinite(eta_p))):
            p_f = np.zeros(nf)
            eta_p = np.zeros(nz)
        p = np.zeros(n)
        p[free] = p_f
        return p, eta_p, grad, pin_idx

    for it in range(1, max_iter + 1):
        violated = v > kink_tol
        pinned = np.abs(v) <= kink_tol
        at_lo = x <= lb + 1e-12
        at_hi = x >= ub - 1e-12

        # first pass: gradient-based box binding
        vp_all = np.where(violated, v, 0.0)
        g_smooth = H @ x + g
        if violated.any():
            g_smooth = g_smooth + C[violated].T @ (lam[violated]
                                                   + rho[violated] * vp_all[violated])
        fixed = (at_lo & (g_smooth > 0)) | (at_hi & (g_smooth < 0))
        p, eta_pin, grad, pin_idx = direction(violated, pinned, fixed)

        # reconcile pinned-row multipliers and direction/box feasibility;
        # set changes are batched, so a handful of passes settles it
        for _ in range(12):
            release = eta_pin < -1e-9
            upgrade = eta_pin > lam[pin_idx] + 1e-9
            outward = (at_lo & (p < -1e-14)) | (at_hi & (p > 1e-14))
            if not (release.any() or upgrade.any() or outward.any()):
                break
            pinned[pin_idx[release]] = False
            pinned[pin_idx[upgrade]] = False
            violated[pin_idx[upgrade]] = True
            fixed = fixed | outward
            p, eta_pin, grad, pin_idx = direction(violated, pinned, fixed)
        # any still-outward component is dropped; tangency loss is handled
        # by the kink-aware line search
        p[(at_lo & (p < 0)) | (at_hi & (p > 0))] = 0.0

        # admissible-multiplier stationarity test
        eta = np.zeros(m)
        eta[violated] = lam[violated] + rho[violated] * np.maximum(v[violated], 0.0)
        if pin_idx.size:
            eta[pin_idx] = np.clip(eta_pin, 0.0, lam[pin_idx])
        grad_full = H @ x + g + (C.T @ eta if m else 0.0)
        pg = grad_full.copy()
        pg[at_lo & (pg > 0)] = 0.0
        pg[at_hi & (pg < 0)] = 0.0
        kkt = float(np.abs(pg).max(initial=0.0))
        if kkt <= stat_tol:
            status = "optimal"
            break

        if np.abs(p).max(initial=0.0) <= 1e-13 * (1.0 + np.abs(x).max()):
            p = -pg / max(np.abs(pg).max(), 1.0)
            p[(at_lo & (p < 0)) | (at_hi & (p > 0))] = 0.0

        # walk the box-projection arc with exact piecewise searches
        moved = False
        for _ in range(8):
            with np.errstate(divide="ignore", invalid="ignore"):
                step_hi = np.where(p > 1e-16, (ub - x) / p, np.inf)
                step_lo = np.where(p < -1e-16, (lb - x) / p, np.inf)
            alpha_max = float(min(np.min(np.minimum(step_hi, step_lo)), 1.0))
            if alpha_max <= 1e-16 or np.abs(p).max(initial=0.0) <= 1e-14:
                break
            Cp = C @ p if m else np.zeros(0)
            tangent = pinned & (np.abs(Cp) <= 1e-11 * (1.0 + np.abs(Cp).max())) \
                if m else pinned
            alpha = _exact_line_search(p, H @ x + g, H, C, lam, rho, v, Cp,
                                       alpha_max, tangent)
            if not np.isfinite(alpha) or alpha <= 1e-16:
                break
            x_new = np.clip(x + alpha * p, lb, ub)
            if not np.all(np.isfinite(x_new)):
                break
            x = x_new
            v = C @ x - d if m else v
            moved = True
            if alpha < alpha_max - 1e-14:
                break                      # interior minimum on this face
            hit = ((x <= lb + 1e-12) & (p < 0)) | ((x >= ub - 1e-12) & (p > 0))
            p[hit] = 0.0

        new_obj, v = _penalty_objective(H, g, x, C, d, lam, rho)
        if not moved or obj - new_obj <= 1e-14 * max(1.0, abs(obj)):
            obj = min(obj, new_obj)
            break                          # stalled: best iterate, honest kkt
        obj = new_obj

    # slacks reported for every caller row, including dropped constant rows
    if d_full is not None and np.size(d_full):
        vp = np.maximum(np.atleast_2d(C_full) @ x - d_full, 0.0)
    else:
        vp = np.zeros(0)
    return QpResult(x, status, None, eta, kkt, it, obj, slack=vp)

