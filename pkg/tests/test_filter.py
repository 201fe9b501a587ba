import numpy as np
import pytest

from trackguard.filter import FilterConfig, SafetyFilter, intervention_norm
from trackguard.relative import CurvatureSingularity, curvilinear_step
from trackguard.terminal import TerminalSet
from trackguard.track import TrackRelativeState, corner_errors, load_track
from trackguard.vehicle import ControlInput, VehicleParams, steady_throttle

ARTIFACT = "artifacts/terminal_set.json"


@pytest.fixture(scope="module")
def setup(params):
    track = load_track("configs/track.json")
    ts = TerminalSet.load(ARTIFACT)
    return track, ts


def steady_drive(filt, track, params, u_d, x0, n_steps):
    """Close the loop with the filter's own prediction map as the plant."""
    x = x0.copy()
    results = []
    for _ in range(n_steps):
        rel = TrackRelativeState.from_array(x[1:], s=track.wrap_s(x[0]))
        res = filt.filter_step(track.relative_to_global(rel), u_d, rel=rel)
        results.append(res)
        x = curvilinear_step(x, res.u_applied.as_array(),
                             track.curvature_at(x[0]), filt.params, 0.0125)
    return results, x


class TestInterventionNorm:
    def test_identical(self):
        assert intervention_norm(ControlInput(0.1, 0.5), ControlInput(0.1, 0.5)) == 0.0

    def test_unit_component(self):
        assert intervention_norm(ControlInput(0.1, 0.0), ControlInput(0.0, 0.0)) \
            == pytest.approx(0.1)

    def test_triangle_inequality(self, rng):
        for _ in range(300):
            a, b, c = (ControlInput(*rng.uniform(-1, 1, 2)) for _ in range(3))
            assert intervention_norm(a, c) <= (intervention_norm(a, b)
                                               + intervention_norm(b, c) + 1e-12)


class TestFilterStep:
    def test_safe_input_passthrough(self, setup, params):
        track, ts = setup
        filt = SafetyFilter(track, params, ts)
        u_d = ControlInput(0.0, steady_throttle(1.2, params))
        x0 = np.array([0.3, 0.0, 0.0, 1.2, 0.0, 0.0])
        results, _ = steady_drive(filt, track, params, u_d, x0, 40)
        late = results[5:]
        assert all(r.intervention <= 1e-4 for r in late)
        assert all(r.certified for r in late)
        assert filt.prev_solution.objective <= 1e-6

    def test_unsafe_input_intervention(self, setup, params):
        track, ts = setup
        t = track.half_width
        # still inside braking distance of turn 1, but the straight rollout
        # provably exits the track (oracle below)
        x0 = np.array([1.5, 0.0, 0.0, 2.0, 0.0, 0.0])
        u_d = ControlInput(0.0, 1.0)
        x = x0.copy()
        exited = False
        for _ in range(int(0.75 / 0.0125)):
            try:
                x = curvilinear_step(x, u_d.as_array(), track.curvature_at(x[0]),
                                     params, 0.0125)
            except CurvatureSingularity:
                exited = True
                break
            e_lf, e_rf = corner_errors(x[1], x[2], params)
            if max(abs(e_lf), abs(e_rf)) > t:
                exited = True
                break
        assert exited, "oracle: desired input must leave the track"

        # the first (fully converged, cold-budget) backup plan stays inside
        filt = SafetyFilter(track, params, ts)
        rel0 = TrackRelativeState.from_array(x0[1:], s=x0[0])
        first = filt.filter_step(track.relative_to_global(rel0), u_d, rel=rel0)
        e_lf, e_rf = corner_errors(first.trajectory[1:, 1], first.trajectory[1:, 2],
                                   params)
        assert np.abs(np.column_stack([e_lf, e_rf])).max() <= t * 1.01

        # and the realized closed loop intervenes and never leaves the track
        filt.reset()
        results, _ = steady_drive(filt, track, params, u_d, x0, 60)
        assert max(r.intervention for r in results) > 1e-2
        for r in results:
            e_lf, e_rf = corner_errors(r.rel.e_lat, r.rel.mu, params)
            assert max(abs(e_lf), abs(e_rf)) <= t * 1.01

    def test_zero_rate_term_when_holding(self, setup, params):
        track, ts = setup
        filt = SafetyFilter(track, params, ts)
        u_d = ControlInput(0.0, steady_throttle(1.2, params))
        x0 = np.array([0.3, 0.0, 0.0, 1.2, 0.0, 0.0])
        steady_drive(filt, track, params, u_d, x0, 30)
        # applied == desired == previous: both cost terms vanish
        assert filt.prev_solution.objective <= 1e-8

    def test_input_always_within_bounds(self, setup, params, rng):
        track, ts = setup
        cfg = FilterConfig()
        filt = SafetyFilter(track, params, ts, cfg)
        x = np.array([0.3, 0.0, 0.0, 1.4, 0.0, 0.0])
        for _ in range(60):
            u_d = ControlInput(rng.uniform(-1, 1), rng.uniform(-2, 2))
            rel = TrackRelativeState.from_array(x[1:], s=track.wrap_s(x[0]))
            res = filt.filter_step(track.relative_to_global(rel), u_d, rel=rel)
            u = res.u_applied.as_array()
            assert np.all(u >= cfg.u_lb - 1e-12) and np.all(u <= cfg.u_ub + 1e-12)
            x = curvilinear_step(x, u, track.curvature_at(x[0]), params, 0.0125)

    def test_warm_start_continuity(self, setup, params):
        track, ts = setup
        filt = SafetyFilter(track, params, ts)
        u_d = ControlInput(0.0, steady_throttle(1.2, params))
        x0 = np.array([0.3, 0.0, 0.0, 1.2, 0.0, 0.0])
        results, _ = steady_drive(filt, track, params, u_d, x0, 80)
        us = np.array([r.u_applied.as_array() for r in results])
        step = np.abs(np.diff(us, axis=0)).max(axis=0)
        # regression bound: safe streams move far less than the trust region
        assert step[0] <= 0.02 and step[1] <= 0.05

    def test_certified_flag_threshold(self, setup, params):
        track, ts = setup
        cfg = FilterConfig(cert_tol=1e-3)
        filt = SafetyFilter(track, params, ts, cfg)
        rel = TrackRelativeState(0.0, 0.0, 1.2, 0.0, 0.0, s=0.3)
        res = filt.filter_step(track.relative_to_global(rel),
                               ControlInput(0.0, steady_throttle(1.2, params)), rel=rel)
        assert res.certified == (res.intervention <= 1e-3)

    def test_track_curvature_range_guard(self, setup, params):
        track, ts = setup
        shrunk = TerminalSet(ts.P, ts.K, ts.alpha,
                             [ss for ss in ts.grid if abs(ss.c) <= 0.5],
                             ts.v_x_target, ts.Ts, ts.u_lb, ts.u_ub)
        with pytest.raises(ValueError, match="certified range"):
            SafetyFilter(track, params, shrunk)


class TestFallbacks:
    def test_solver_failure_uses_leftover_plan(self, setup, params, monkeypatch):
        track, ts = setup
        filt = SafetyFilter(track, params, ts)
        u_d = ControlInput(0.0, steady_throttle(1.2, params))
        x0 = np.array([0.3, 0.0, 0.0, 1.2, 0.0, 0.0])
        steady_drive(filt, track, params, u_d, x0, 5)
        expect = filt.prev_solution.us[1].copy()

        def boom(*a, **kw):
            raise CurvatureSingularity("forced")
        monkeypatch.setattr("trackguard.filter.sqp_step", boom)
        rel = TrackRelativeState(0.0, 0.0, 1.2, 0.0, 0.0, s=0.4)
        res = filt.filter_step(track.relative_to_global(rel), u_d, rel=rel)
        assert res.degraded
        assert "degraded-warm" in res.status
        np.testing.assert_allclose(res.u_applied.as_array(), expect, atol=1e-12)

    def test_solver_failure_cold_uses_terminal_law(self, setup, params, monkeypatch):
        track, ts = setup
        filt = SafetyFilter(track, params, ts)

        def boom(*a, **kw):
            raise CurvatureSingularity("forced")
        monkeypatch.setattr("trackguard.filter.sqp_step", boom)
        rel = TrackRelativeState(0.01, 0.0, 1.2, 0.0, 0.0, s=0.4)
        res = filt.filter_step(track.relative_to_global(rel),
                               ControlInput(0.0, 0.3), rel=rel)
        assert res.degraded and "terminal-law" in res.status
        c = float(np.clip(track.curvature_at(0.4), *ts.c_range))
        expect = ts.terminal_law(rel.as_array(), c)
        np.testing.assert_allclose(res.u_applied.as_array(), expect, atol=1e-12)

    def test_projection_failure_brakes(self, setup, params, monkeypatch):
        track, ts = setup
        filt = SafetyFilter(track, params, ts)
        from trackguard.track import ProjectionError

        def no_proj(*a, **kw):
            raise ProjectionError("forced")
        monkeypatch.setattr(filt.track.__class__, "global_to_relative",
                            lambda self, *a, **kw: (_ for _ in ()).throw(ProjectionError("x")))
        res = filt.filter_step(track.relative_to_global(
            TrackRelativeState(0, 0, 1.2, 0, 0, s=0.4)), ControlInput(0.0, 0.3))
        assert res.degraded and "brake" in res.status


class TestConfigValidation:
    def test_w_must_dominate(self):
        with pytest.raises(ValueError, match="dominate"):
            FilterConfig(W=np.diag([1.0, 1.0]), R_S=np.diag([1.0, 1.0]))

    def test_w_positive_definite(self):
        with pytest.raises(ValueError):
            FilterConfig(W=np.diag([0.0, 1.0]))
