import itertools

import numpy as np
import pytest

from trackguard.qp import solve_qp, solve_penalty_qp, QpResult


def enumerate_qp(H, g, A, b):
    """Brute-force oracle: try every active set, check KKT, return the best.

    Only viable for a handful of constraints; used as ground truth.
    """
    m = A.shape[0]
    best, best_obj = None, np.inf
    for k in range(m + 1):
        for subset in itertools.combinations(range(m), k):
            idx = list(subset)
            Aa = A[idx]
            KKT = np.block([[H, Aa.T], [Aa, np.zeros((k, k))]])
            rhs = np.concatenate([-g, b[idx]])
            try:
                sol = np.linalg.solve(KKT, rhs)
            except np.linalg.LinAlgError:
                continue
            x, lam = sol[: g.size], sol[g.size:]
            if np.any(lam < -1e-10):
                continue
            if np.any(A @ x - b > 1e-9):
                continue
            obj = 0.5 * x @ H @ x + g @ x
            if obj < best_obj - 1e-12:
                best, best_obj = x, obj
    return best, best_obj


def random_psd(rng, n, cond=10.0):
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    eig = np.geomspace(1.0, cond, n)
    return Q @ np.diag(eig) @ Q.T


class TestSolveQp:
    def test_scalar_clipped(self):
        # min (u-3)^2 s.t. u <= 1  ->  u* = 1, dual = 4
        res = solve_qp(np.array([[2.0]]), np.array([-6.0]),
                       A_in=np.array([[1.0]]), b_in=np.array([1.0]))
        assert res.status == "optimal"
        assert res.x[0] == pytest.approx(1.0, abs=1e-10)
        assert res.dual_in[0] == pytest.approx(4.0, abs=1e-8)

    def test_unconstrained(self, rng):
        H = random_psd(rng, 6)
        g = rng.standard_normal(6)
        res = solve_qp(H, g)
        np.testing.assert_allclose(res.x, -np.linalg.solve(H, g), atol=1e-10)

    def test_equality_constrained(self, rng):
        H = random_psd(rng, 5)
        g = rng.standard_normal(5)
        A = rng.standard_normal((2, 5))
        b = rng.standard_normal(2)
        res = solve_qp(H, g, A_eq=A, b_eq=b)
        KKT = np.block([[H, A.T], [A, np.zeros((2, 2))]])
        direct = np.linalg.solve(KKT, np.concatenate([-g, b]))
        np.testing.assert_allclose(res.x, direct[:5], atol=1e-9)
        assert res.kkt_residual < 1e-8

    def test_matches_enumeration_on_random_box_qps(self, rng):
        # 100 random 20-variable instances with 10 box rows
        for _ in range(100):
            n = 20
            H = random_psd(rng, n, cond=50.0)
            g = rng.standard_normal(n) * 2
            rows = rng.choice(n, size=10, replace=False)
            signs = rng.choice([-1.0, 1.0], size=10)
            A = np.zeros((10, n))
            A[np.arange(10), rows] = signs
            b = rng.uniform(-0.5, 0.5, 10)
            res = solve_qp(H, g, A_in=A, b_in=b)
            x_star, obj_star = enumerate_qp(H, g, A, b)
            assert res.status == "optimal"
            assert np.max(np.abs(res.x - x_star)) <= 1e-6
            assert res.kkt_residual <= 1e-7

    def test_infeasible_equalities(self):
        H = np.eye(2)
        g = np.zeros(2)
        A = np.array([[1.0, 0.0], [1.0, 0.0]])
        b = np.array([0.0, 1.0])
        res = solve_qp(H, g, A_eq=A, b_eq=b)
        assert res.status == "infeasible"

    def test_infeasible_inequalities(self):
        H = np.eye(1)
        g = np.zeros(1)
        A = np.array([[1.0], [-1.0]])
        b = np.array([-1.0, -1.0])  # x <= -1 and x >= 1
        res = solve_qp(H, g, A_in=A, b_in=b)
        assert res.status == "infeasible"

    def test_determinism(self, rng):
        H = random_psd(rng, 8)
        g = rng.standard_normal(8)
        A = rng.standard_normal((4, 8))
        b = rng.standard_normal(4)
        r1 = solve_qp(H, g, A_in=A, b_in=b)
        r2 = solve_qp(H.copy(), g.copy(), A_in=A.copy(), b_in=b.copy())
        assert np.array_equal(r1.x, r2.x)


class TestPenaltyQp:
    def lifted_reference(self, H, g, lb, ub, C, d, lam, rho):
        """Same problem as an explicit slack QP through solve_qp."""
        n, ms = g.size, d.size
        H_aug = np.zeros((n + ms, n + ms))
        H_aug[:n, :n] = H
        H_aug[n:, n:] = np.diag(rho) + 1e-9 * np.eye(ms)
        g_aug = np.concatenate([g, lam])
        rows = []
        rhs = []
        rows.append(np.hstack([C, -np.eye(ms)]))          # Cx - s <= d
        rhs.append(d)
        rows.append(np.hstack([np.zeros((ms, n)), -np.eye(ms)]))  # s >= 0
        rhs.append(np.zeros(ms))
        eye = np.eye(n)
        rows.append(np.hstack([eye, np.zeros((n, ms))]))
        rhs.append(ub)
        rows.append(np.hstack([-eye, np.zeros((n, ms))]))
        rhs.append(-lb)
        res = solve_qp(H_aug, g_aug, A_in=np.vstack(rows), b_in=np.concatenate(rhs))
        assert res.status == "optimal"
        return res.x[:n], res.x[n:]

    def test_matches_lifted_qp(self, rng):
        for trial in range(30):
            n, ms = 12, 8
            H = random_psd(rng, n, cond=30.0)
            g = rng.standard_normal(n)
            lb = np.full(n, -2.0)
            ub = np.full(n, 2.0)
            C = rng.standard_normal((ms, n))
            d = rng.uniform(-1.0, 0.5, ms)
            lam = np.full(ms, 10.0)
            rho = np.full(ms, 5.0)
            res = solve_penalty_qp(H, g, lb, ub, C, d, lam, rho)
            x_ref, s_ref = self.lifted_reference(H, g, lb, ub, C, d, lam, rho)
            assert np.max(np.abs(res.x - x_ref)) <= 1e-6, f"trial {trial}"
            assert np.max(np.abs(res.slack - s_ref)) <= 1e-5

    def test_exact_penalty_recovers_feasibility(self, rng):
        # feasible instance + lambda above the dual norm -> zero slack
        for _ in range(20):
            n = 10
            H = random_psd(rng, n)
            g = rng.standard_normal(n)
            C = rng.standard_normal((4, n))
            x_interior = rng.standard_normal(n) * 0.1
            d = C @ x_interior + rng.uniform(0.1, 0.5, 4)   # strictly feasible
            res = solve_penalty_qp(H, g, np.full(n, -5.0), np.full(n, 5.0),
                                   C, d, lam=np.full(4, 1e4), rho=np.full(4, 1e3))
            assert np.all(res.slack <= 1e-8)

    def test_box_only(self):
        res = solve_penalty_qp(np.eye(2), np.array([-10.0, 3.0]),
                               np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
        np.testing.assert_allclose(res.x, [1.0, -1.0], atol=1e-12)

    def test_active_soft_row_value(self):
        # min (x-2)^2 + penalty on x <= 0: analytic optimum from the
        # first-order condition 2(x-2) + lam + rho x = 0 on the violated side
        lam, rho = 1.0, 4.0
        res = solve_penalty_qp(np.array([[2.0]]), np.array([-4.0]),
                               np.array([-10.0]), np.array([10.0]),
                               C=np.array([[1.0]]), d=np.array([0.0]),
                               lam=np.array([lam]), rho=np.array([rho]))
        x_expect = (4.0 - lam) / (2.0 + rho)
        assert res.x[0] == pytest.approx(x_expect, abs=1e-10)
        assert res.slack[0] == pytest.approx(x_expect, abs=1e-10)

    def test_kink_exactness(self):
        # lambda large enough that the optimum sits exactly on the kink
        res = solve_penalty_qp(np.array([[2.0]]), np.array([-4.0]),
                               np.array([-10.0]), np.array([10.0]),
                               C=np.array([[1.0]]), d=np.array([0.0]),
                               lam=np.array([100.0]), rho=np.array([1.0]))
        assert res.x[0] == pytest.approx(0.0, abs=1e-12)
        assert res.slack[0] == 0.0

    def test_determinism(self, rng):
        H = random_psd(rng, 6)
        g = rng.standard_normal(6)
        C = rng.standard_normal((3, 6))
        d = rng.standard_normal(3)
        args = (np.full(6, -1.0), np.full(6, 1.0), C, d, np.full(3, 10.0), np.full(3, 10.0))
        r1 = solve_penalty_qp(H, g, *args)
        r2 = solve_penalty_qp(H.copy(), g.copy(), *args)
        assert np.array_equal(r1.x, r2.x)
