import numpy as np
import pytest

from trackguard.relative import (CurvatureSingularity, compute_steady_state,
                                 curvilinear_step, curvilinear_step_jacobians,
                                 linearize_relative, relative_dynamics_cont,
                                 relative_jacobians_cont, relative_step,
                                 relative_step_jacobians)
from trackguard.track import Track, TrackSegment
from trackguard.vehicle import VehicleState, ControlInput, discrete_step

TS = 0.0125


class TestRelativeDynamics:
    def test_straight_reduction(self, params):
        xr = np.array([0.1, 0.0, 1.5, 0.0, 0.7])
        dx = relative_dynamics_cont(xr, np.zeros(2), 0.0, params)
        assert dx[0] == 0.0          # e_lat_dot = vx*sin(mu) + vy*cos(mu) = 0
        assert dx[1] == 0.7          # mu_dot = r on a straight

    def test_singularity_guard(self, params):
        xr = np.array([0.5, 0.0, 1.0, 0.0, 0.0])
        with pytest.raises(CurvatureSingularity):
            relative_dynamics_cont(xr, np.zeros(2), 2.0, params)

    def test_frame_equivalence_on_circle(self, params):
        # relative rollout at constant c vs projected global rollout; small Ts
        # keeps both Euler chains within 1e-6 of the shared continuous flow
        c = 1.25
        Ts, n = 5e-5, 50
        track = Track([TrackSegment(c, 2 * np.pi / c)], 0.3, closed=True)
        rel0 = np.array([0.05, 0.1, 1.5, -0.05, 1.2])
        u = ControlInput(delta=0.12, tau=0.3)

        from trackguard.track import TrackRelativeState
        st = track.relative_to_global(TrackRelativeState.from_array(rel0, s=0.3))
        xr = rel0.copy()
        s_hint = 0.3
        for _ in range(n):
            xr = relative_step(xr, u.as_array(), c, params, Ts)
            st = discrete_step(st, u, params, Ts)
            rel = track.global_to_relative(st, s_hint=s_hint)
            s_hint = rel.s
            np.testing.assert_allclose(rel.as_array(), xr, atol=1e-6)

    def test_jacobians_match_fd(self, params, rng):
        for _ in range(100):
            xr = np.array([rng.uniform(-0.2, 0.2), rng.uniform(-0.6, 0.6),
                           rng.uniform(0.4, 3.0), rng.uniform(-0.8, 0.8),
                           rng.uniform(-5, 5)])
            u = np.array([rng.uniform(-0.4, 0.4), rng.uniform(-1, 1)])
            c = rng.uniform(-2.0, 2.0)
            A, B = relative_step_jacobians(xr, u, c, params, TS)
            h = 1e-6
            for j in range(5):
                d = np.zeros(5); d[j] = h
                col = (relative_step(xr + d, u, c, params, TS)
                       - relative_step(xr - d, u, c, params, TS)) / (2 * h)
                assert np.max(np.abs(A[:, j] - col) / np.maximum(np.abs(col), 1.0)) < 1e-5
            for j in range(2):
                d = np.zeros(2); d[j] = h
                col = (relative_step(xr, u + d, c, params, TS)
                       - relative_step(xr, u - d, c, params, TS)) / (2 * h)
                assert np.max(np.abs(B[:, j] - col) / np.maximum(np.abs(col), 1.0)) < 1e-5


class TestCurvilinear:
    def test_s_row_dynamics(self, params):
        xc = np.array([2.0, 0.0, 0.0, 1.5, 0.0, 0.0])
        out = curvilinear_step(xc, np.zeros(2), 0.0, params, TS)
        assert out[0] == pytest.approx(2.0 + TS * 1.5)

    def test_s_row_curvature_scaling(self, params):
        # on the inside of a turn (c*e_lat > 0) progress is faster
        xc = np.array([0.0, 0.1, 0.0, 1.0, 0.0, 0.0])
        out = curvilinear_step(xc, np.zeros(2), 1.0, params, TS)
        assert out[0] == pytest.approx(TS * 1.0 / 0.9)

    def test_jacobians_match_fd(self, params, rng):
        for _ in range(100):
            xc = np.array([rng.uniform(0, 10), rng.uniform(-0.2, 0.2),
                           rng.uniform(-0.6, 0.6), rng.uniform(0.4, 3.0),
                           rng.uniform(-0.8, 0.8), rng.uniform(-5, 5)])
            u = np.array([rng.uniform(-0.4, 0.4), rng.uniform(-1, 1)])
            c = rng.uniform(-2.0, 2.0)
            A, B = curvilinear_step_jacobians(xc, u, c, params, TS)
            h = 1e-6
            for j in range(6):
                d = np.zeros(6); d[j] = h
                col = (curvilinear_step(xc + d, u, c, params, TS)
                       - curvilinear_step(xc - d, u, c, params, TS)) / (2 * h)
                assert np.max(np.abs(A[:, j] - col) / np.maximum(np.abs(col), 1.0)) < 1e-5
            for j in range(2):
                d = np.zeros(2); d[j] = h
                col = (curvilinear_step(xc, u + d, c, params, TS)
                       - curvilinear_step(xc, u - d, c, params, TS)) / (2 * h)
                assert np.max(np.abs(B[:, j] - col) / np.maximum(np.abs(col), 1.0)) < 1e-5

    def test_batch_matches_loop(self, params, rng):
        xs = rng.uniform(-0.1, 0.1, (8, 6)); xs[:, 3] += 1.5
        us = rng.uniform(-0.3, 0.3, (8, 2))
        cs = rng.uniform(-1.5, 1.5, 8)
        batch = curvilinear_step(xs, us, cs, params, TS)
        for k in range(8):
            np.testing.assert_array_equal(batch[k],
                                          curvilinear_step(xs[k], us[k], cs[k], params, TS))


class TestSteadyState:
    def test_straight_line(self, params):
        ss = compute_steady_state(0.0, 1.5, params, TS)
        np.testing.assert_allclose(ss.x_r_e, [0, 0, 1.5, 0, 0], atol=1e-9)
        assert ss.u_e[0] == pytest.approx(0.0, abs=1e-9)
        from trackguard.vehicle import longitudinal_force
        assert longitudinal_force(1.5, ss.u_e[1], params) == pytest.approx(0.0, abs=1e-9)

    def test_discrete_fixed_point(self, params):
        for c in (-2.5, -1.0, 0.0, 1.7, 2.5):
            ss = compute_steady_state(c, 1.5, params, TS)
            step = relative_step(ss.x_r_e, ss.u_e, c, params, TS)
            assert np.linalg.norm(step - ss.x_r_e) <= 1e-8
            assert ss.x_r_e[0] == 0.0

    def test_hold_for_100_steps(self, params):
        ss = compute_steady_state(2.0, 1.5, params, TS)
        xr = ss.x_r_e.copy()
        for _ in range(100):
            xr = relative_step(xr, ss.u_e, ss.c, params, TS)
        assert np.linalg.norm(xr - ss.x_r_e) <= 1e-6

    def test_mirror_symmetry(self, params):
        a = compute_steady_state(1.8, 1.5, params, TS)
        b = compute_steady_state(-1.8, 1.5, params, TS)
        flip = np.array([1, -1, 1, -1, -1.0])
        np.testing.assert_allclose(b.x_r_e, flip * a.x_r_e, atol=1e-8)
        assert b.u_e[0] == pytest.approx(-a.u_e[0], abs=1e-8)
        assert b.u_e[1] == pytest.approx(a.u_e[1], abs=1e-8)

    def test_infeasible_curvature_raises(self, params):
        from trackguard.relative import SteadyStateError
        with pytest.raises(SteadyStateError):
            compute_steady_state(8.0, 2.5, params, TS)


class TestLinearize:
    def test_zero_curvature_structure(self, params):
        ss = compute_steady_state(0.0, 1.5, params, TS)
        lin = linearize_relative(ss, params, TS)
        # d e_lat / d mu = Ts * v_x_target at mu = 0, vy = 0
        assert lin.A[0, 1] == pytest.approx(TS * 1.5)
        # drivetrain input does not touch the kinematic rows
        assert lin.B[0, 1] == 0.0 and lin.B[1, 1] == 0.0

    def test_grid_matches_fd(self, params):
        h = 1e-6
        for c in np.linspace(-2.5, 2.5, 21):
            ss = compute_steady_state(c, 1.5, params, TS)
            lin = linearize_relative(ss, params, TS)
            for j in range(5):
                d = np.zeros(5); d[j] = h
                col = (relative_step(ss.x_r_e + d, ss.u_e, c, params, TS)
                       - relative_step(ss.x_r_e - d, ss.u_e, c, params, TS)) / (2 * h)
                assert np.max(np.abs(lin.A[:, j] - col) / np.maximum(np.abs(col), 1.0)) < 1e-5
