import numpy as np
import pytest

from trackguard.vehicle import (VehicleParams, VehicleState, ControlInput,
                                tire_forces, continuous_dynamics, discrete_step,
                                dynamics_jacobians, dynamics_array,
                                jacobians_array, rk4_step_array, steady_throttle)


def random_states(rng, n, vx_range=(0.3, 4.0)):
    """Random states/inputs away from the slip-floor kink at vx = v_min."""
    x = np.zeros((n, 6))
    x[:, 0] = rng.uniform(-5, 5, n)
    x[:, 1] = rng.uniform(-5, 5, n)
    x[:, 2] = rng.uniform(-np.pi, np.pi, n)
    x[:, 3] = rng.uniform(*vx_range, n)
    x[:, 4] = rng.uniform(-1.0, 1.0, n)
    x[:, 5] = rng.uniform(-6.0, 6.0, n)
    u = np.column_stack([rng.uniform(-0.4, 0.4, n), rng.uniform(-1, 1, n)])
    return x, u


class TestTireForces:
    def test_zero_slip(self, params):
        tf = tire_forces(VehicleState(vx=1.0), ControlInput(), params)
        assert tf.alpha_f == 0 and tf.alpha_r == 0
        assert tf.Fyf == 0 and tf.Fyr == 0

    def test_rear_axle_alignment(self, params):
        # vy = lr*r puts the rear contact point velocity along the body axis
        r = 2.0
        st = VehicleState(vx=1.5, vy=params.lr * r, r=r)
        tf = tire_forces(st, ControlInput(), params)
        assert tf.alpha_r == pytest.approx(0.0, abs=1e-15)

    def test_zero_longitudinal(self, params):
        tf = tire_forces(VehicleState(vx=0.0), ControlInput(tau=0.0), params)
        assert tf.Fx == 0.0

    def test_small_angle_linearization(self, params):
        # within 1% of B*C*D*alpha for |alpha| <= 0.01 rad
        alphas = np.linspace(-0.01, 0.01, 41)
        alphas = alphas[alphas != 0]
        for B, C, D in ((params.Bf, params.Cf, params.Df), (params.Br, params.Cr, params.Dr)):
            fy = D * np.sin(C * np.arctan(B * alphas))
            lin = B * C * D * alphas
            assert np.all(np.abs(fy - lin) <= 0.01 * np.abs(lin))

    def test_saturation_bound(self, params, rng):
        x, u = random_states(rng, 100_000, vx_range=(0.0, 5.0))
        from trackguard.vehicle import slip_angles, lateral_force
        af, ar = slip_angles(x[:, 3], x[:, 4], x[:, 5], u[:, 0], params)
        assert np.all(np.abs(lateral_force(af, params.Bf, params.Cf, params.Df)) <= params.Df)
        assert np.all(np.abs(lateral_force(ar, params.Br, params.Cr, params.Dr)) <= params.Dr)

    def test_rejects_non_finite(self, params):
        with pytest.raises(ValueError):
            tire_forces(VehicleState(vx=np.nan), ControlInput(), params)


class TestContinuousDynamics:
    def test_straight_coasting_equilibrium(self, params):
        tau = steady_throttle(1.0, params)
        dx = continuous_dynamics(VehicleState(vx=1.0), ControlInput(tau=tau), params)
        np.testing.assert_allclose(dx, [1, 0, 0, 0, 0, 0], atol=1e-12)

    def test_velocity_rotation(self, params):
        dx = continuous_dynamics(VehicleState(psi=np.pi / 2, vx=1.0), ControlInput(), params)
        assert dx[0] == pytest.approx(0.0, abs=1e-15)
        assert dx[1] == pytest.approx(1.0)

    def test_no_lateral_excitation(self, params):
        dx = continuous_dynamics(VehicleState(vx=2.0, vy=0.0, r=0.0),
                                 ControlInput(delta=0.0, tau=0.3), params)
        assert dx[4] == 0.0 and dx[5] == 0.0

    def test_energy_decay_when_coasting(self, params):
        # tau = 0 with C3, C4 < 0: vx non-increasing on a straight line
        assert params.C3 < 0 and params.C4 < 0
        x = np.array([0, 0, 0, 3.0, 0, 0], dtype=float)
        u = np.zeros(2)
        vxs = [x[3]]
        for _ in range(400):
            x = x + 0.0125 * dynamics_array(x, u, params)
            vxs.append(x[3])
        assert np.all(np.diff(vxs) <= 0)


class TestDiscreteStep:
    def test_zero_dt_identity(self, params):
        st = VehicleState(1, 2, 0.3, 1.5, 0.1, -0.2)
        out = discrete_step(st, ControlInput(0.1, 0.2), params, 0.0)
        assert out == st

    def test_straight_advance(self, params):
        tau = steady_throttle(1.0, params)
        out = discrete_step(VehicleState(vx=1.0), ControlInput(tau=tau), params, 0.0125)
        assert out.px == pytest.approx(0.0125)
        assert (out.py, out.psi, out.vy, out.r) == (0, 0, 0, 0)
        assert out.vx == pytest.approx(1.0)

    def test_negative_dt_rejected(self, params):
        with pytest.raises(ValueError):
            discrete_step(VehicleState(vx=1.0), ControlInput(), params, -0.1)

    def test_euler_rk4_convergence_order(self, params, rng):
        # halving Ts must cut the one-step Euler-vs-RK4 gap by >= 3.5x;
        # Ts small enough that the O(Ts^3) remainder does not pollute the ratio
        x, u = random_states(rng, 20)
        Ts = 0.001
        e1 = np.linalg.norm(x + Ts * dynamics_array(x, u, params)
                            - rk4_step_array(x, u, params, Ts, substeps=8), axis=1)
        h = Ts / 2
        e2 = np.linalg.norm(x + h * dynamics_array(x, u, params)
                            - rk4_step_array(x, u, params, h, substeps=8), axis=1)
        ratio = e1 / np.maximum(e2, 1e-300)
        assert np.all(ratio >= 3.5)


class TestJacobians:
    def test_zero_dt(self, params):
        A, B = dynamics_jacobians(VehicleState(vx=1.0, vy=0.2, r=0.5),
                                  ControlInput(0.1, 0.3), params, 0.0)
        np.testing.assert_array_equal(A, np.eye(6))
        np.testing.assert_array_equal(B, np.zeros((6, 2)))

    def test_px_vx_entry(self, params):
        Ts = 0.0125
        A, _ = dynamics_jacobians(VehicleState(vx=1.2), ControlInput(), params, Ts)
        assert A[0, 3] == pytest.approx(Ts)

    def test_matches_finite_differences(self, params, rng):
        Ts = 0.0125
        x, u = random_states(rng, 100)
        A, B = jacobians_array(x, u, params, Ts)
        h = 1e-6

        def step(xa, ua):
            return xa + Ts * dynamics_array(xa, ua, params)

        for k in range(x.shape[0]):
            A_fd = np.empty((6, 6))
            B_fd = np.empty((6, 2))
            for j in range(6):
                dx = np.zeros(6)
                dx[j] = h
                A_fd[:, j] = (step(x[k] + dx, u[k]) - step(x[k] - dx, u[k])) / (2 * h)
            for j in range(2):
                du = np.zeros(2)
                du[j] = h
                B_fd[:, j] = (step(x[k], u[k] + du) - step(x[k], u[k] - du)) / (2 * h)
            scale_A = np.maximum(np.abs(A_fd), 1.0)
            scale_B = np.maximum(np.abs(B_fd), 1.0)
            assert np.max(np.abs(A[k] - A_fd) / scale_A) < 1e-5
            assert np.max(np.abs(B[k] - B_fd) / scale_B) < 1e-5


class TestDeterminism:
    def test_bit_identical(self, params, rng):
        x, u = random_states(rng, 10)
        a = dynamics_array(x, u, params)
        b = dynamics_array(x.copy(), u.copy(), params)
        assert np.array_equal(a, b)


class TestParamsIO:
    def test_roundtrip(self, tmp_path, params):
        f = tmp_path / "p.json"
        params.to_file(f)
        assert VehicleParams.from_file(f) == params

    def test_rejects_unknown_key(self, tmp_path):
        f = tmp_path / "p.json"
        f.write_text('{"m": 0.19, "bogus": 1}')
        with pytest.raises(ValueError, match="bogus"):
            VehicleParams.from_file(f)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            VehicleParams(m=-1.0)
