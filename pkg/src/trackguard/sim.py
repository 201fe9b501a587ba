"""Deterministic fixed-step closed-loop simulation.

A ClosedLoop owns the plant and the filter and advances one control period
at a time; run_episode drives it with a scripted desired-input policy and
collects a structured log. The live service drives the same ClosedLoop, so
batch and interactive runs share one code path.

Plant modes: 'euler' steps the filter's own curvilinear prediction map, so
prediction and plant coincide exactly; 'rk4' integrates the global-frame
model with RK4 substeps to exercise model mismatch.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .filter import FilterConfig, FilterResult, SafetyFilter, intervention_norm
from .relative import CurvatureSingularity, curvilinear_step
from .terminal import TerminalSet, membership
from .track import Track, TrackRelativeState, corner_errors
from .vehicle import (ControlInput, VehicleParams, VehicleState,
                      rk4_step_array, steady_throttle)


@dataclass
class PolicySpec:
    """Scripted desired-input source.

    kinds: constant, sinusoid-steer, pure-pursuit, pure-pursuit-with-faults,
    replay. Fault windows are (t_start, t_end, delta, tau) overrides applied
    verbatim while active; they must not overlap.
    """

    kind: str = "pure-pursuit"
    delta: float = 0.0              # constant
    tau: float = 0.0
    amplitude: float = 0.3          # sinusoid-steer
    frequency: float = 0.5          # Hz
    lookahead_dist: float = 0.6     # pure-pursuit
    v_target: float = 1.2
    k_speed: float = 1.5
    faults: list = field(default_factory=list)   # [(t0, t1, delta, tau), ...]
    replay: list = field(default_factory=list)   # [(delta, tau), ...]
    seed: int = 0

    def __post_init__(self):
        spans = sorted((f[0], f[1]) for f in self.faults)
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            if b0 < a1:
                raise ValueError("fault windows overlap")


@dataclass
class SimConfig:
    duration: float = 10.0
    Ts: float = 0.0125
    plant: str = "euler"            # 'euler' | 'rk4'
    rk4_substeps: int = 4
    filter_on: bool = True
    start_s: float = 0.2
    start_offset: float = 0.0       # initial lateral error
    start_speed: float = 1.2
    seed: int = 0

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be > 0")
        if self.plant not in ("euler", "rk4"):
            raise ValueError("plant must be 'euler' or 'rk4'")


@dataclass
class SimRecord:
    t: float
    px: float
    py: float
    psi: float
    vx: float
    vy: float
    r: float
    s: float
    e_lat: float
    mu: float
    ud_delta: float
    ud_tau: float
    u_delta: float
    u_tau: float
    intervention: float
    e_lf: float
    e_rf: float
    slack_max: float
    term_value: float
    status: str
    solve_ms: float


LOG_COLUMNS = ["t", "px", "py", "psi", "vx", "vy", "r", "s", "e_lat", "mu",
               "ud_delta", "ud_tau", "u_delta", "u_tau", "intervention",
               "e_lf", "e_rf", "slack_max", "term_value", "status", "solve_ms"]


@dataclass
class SimLog:
    records: list
    breach: bool = False
    breach_time: float | None = None
    laps: float = 0.0

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def __len__(self):
        return len(self.records)


class PurePursuit:
    """Steers at a point a fixed arc length ahead on the centerline."""

    def __init__(self, spec: PolicySpec, track: Track, params: VehicleParams):
        self.spec = spec
        self.track = track
        self.params = params
        self.s_hint = None
        self.tau_ff = steady_throttle(spec.v_target, params)

    def __call__(self, state: VehicleState, t: float) -> ControlInput:
        rel = self.track.global_to_relative(state, s_hint=self.s_hint)
        self.s_hint = rel.s
        target = self.track.centerline_pose_at(rel.s + self.spec.lookahead_dist)
        dx = target.x_t - state.px
        dy = target.y_t - state.py
        alpha = math.atan2(dy, dx) - state.psi
        alpha = math.atan2(math.sin(alpha), math.cos(alpha))
        L = self.params.wheelbase
        dist = max(math.hypot(dx, dy), 1e-6)
        delta = math.atan2(2.0 * L * math.sin(alpha), dist)
        tau = self.tau_ff + self.spec.k_speed * (self.spec.v_target - state.vx)
        return ControlInput(delta, tau)


def make_policy(spec: PolicySpec, track: Track, params: VehicleParams):
    base = None
    if spec.kind in ("pure-pursuit", "pure-pursuit-with-faults"):
        base = PurePursuit(spec, track, params)
    return base


def policy_eval(spec: PolicySpec, state: VehicleState, track: Track, t: float,
                params: VehicleParams | None = None, _base=None) -> ControlInput:
    """Evaluate a policy at one state/time; stateless entry point.

    run_episode keeps a persistent pure-pursuit instance for hint continuity;
    this function builds a throwaway one when none is supplied.
    """
    if spec.kind in ("pure-pursuit", "pure-pursuit-with-faults"):
        pp = _base or PurePursuit(spec, track, params or VehicleParams())
        u = pp(state, t)   # evaluated every step so the projection hint tracks
        if spec.kind == "pure-pursuit-with-faults":
            for t0, t1, fdelta, ftau in spec.faults:
                if t0 <= t < t1:
                    return ControlInput(fdelta, ftau)
        return u
    if spec.kind == "constant":
        return ControlInput(spec.delta, spec.tau)
    if spec.kind == "sinusoid-steer":
        return ControlInput(spec.amplitude * math.sin(2 * math.pi * spec.frequency * t),
                            spec.tau)
    if spec.kind == "replay":
        k = int(round(t / 0.0125))
        if k >= len(spec.replay):
            raise IndexError("replay log exhausted")
        d, tau = spec.replay[k]
        return ControlInput(d, tau)
    raise ValueError(f"unknown policy kind '{spec.kind}'")


class ClosedLoop:
    """Plant + filter stepped in lockstep; shared by batch and live runs."""

    def __init__(self, track: Track, params: VehicleParams, terminal_set: TerminalSet,
                 sim: SimConfig, filter_cfg: FilterConfig | None = None):
        self.track = track
        self.params = params
        self.terminal_set = terminal_set
        self.sim = sim
        self.filter_cfg = filter_cfg or FilterConfig()
        self.filter = SafetyFilter(track, params, terminal_set, self.filter_cfg) \
            if sim.filter_on else None
        self.t = 0.0
        self.k = 0
        self.breached = False
        self.reset()

    def reset(self):
        sim = self.sim
        rel0 = TrackRelativeState(e_lat=sim.start_offset, mu=0.0,
                                  vx=sim.start_speed, vy=0.0, r=0.0, s=sim.start_s)
        self.rel = rel0
        self.xc = np.array([rel0.s, rel0.e_lat, rel0.mu, rel0.vx, rel0.vy, rel0.r])
        self.state = self.track.relative_to_global(rel0)
        self.x_global = self.state.as_array()
        self.t = 0.0
        self.k = 0
        self.s_unwrapped = sim.start_s
        self.breached = False
        if self.filter is not None:
            self.filter.reset()

    def step(self, u_d: ControlInput) -> SimRecord:
        """Advance one control period under the desired input."""
        sim = self.sim
        cfg = self.filter_cfg
        u_d_clip = ControlInput(*np.clip(u_d.as_array(), cfg.u_lb, cfg.u_ub))

        if self.filter is not None:
            res = self.filter.filter_step(self.state, u_d_clip, rel=self.rel)
            u = res.u_applied
            interv = res.intervention if np.isfinite(res.intervention) \
                else intervention_norm(u_d_clip, u)
            slack = res.max_slack if np.isfinite(res.max_slack) else 0.0
            term = res.terminal_value if np.isfinite(res.terminal_value) else 0.0
            status = res.status
            solve_ms = res.solve_time * 1e3
        else:
            u = u_d_clip
            interv, slack, term, status, solve_ms = 0.0, 0.0, 0.0, "off", 0.0

        e_lf, e_rf = corner_errors(self.rel.e_lat, self.rel.mu, self.params)
        rec = SimRecord(
            t=float(self.t), px=float(self.state.px), py=float(self.state.py),
            psi=float(self.state.psi), vx=float(self.state.vx),
            vy=float(self.state.vy), r=float(self.state.r),
            s=float(self.rel.s), e_lat=float(self.rel.e_lat), mu=float(self.rel.mu),
            ud_delta=float(u_d.delta), ud_tau=float(u_d.tau),
            u_delta=float(u.delta), u_tau=float(u.tau),
            intervention=float(interv), e_lf=float(e_lf), e_rf=float(e_rf),
            slack_max=float(slack), term_value=float(term), status=status,
            solve_ms=float(solve_ms),
        )

        self._advance_plant(u)
        self.t += sim.Ts
        self.k += 1
        return rec

    def _advance_plant(self, u: ControlInput):
        sim = self.sim
        if sim.plant == "euler":
            c = self.track.curvature_at(self.xc[0])
            try:
                self.xc = curvilinear_step(self.xc, u.as_array(), c,
                                           self.params, sim.Ts)
            except CurvatureSingularity:
                self.breached = True
                return
            self.s_unwrapped = self.xc[0]
            self.rel = TrackRelativeState.from_array(self.xc[1:],
                                                     s=self.track.wrap_s(self.xc[0]))
            self.state = self.track.relative_to_global(self.rel)
        else:
            self.x_global = rk4_step_array(self.x_global, u.as_array(),
                                           self.params, sim.Ts, sim.rk4_substeps)
            self.state = VehicleState.from_array(self.x_global)
            try:
                prev_s = self.rel.s
                self.rel = self.track.global_to_relative(self.state, s_hint=prev_s)
                ds = (self.rel.s - prev_s) % self.track.total_length
                if ds > self.track.total_length / 2:
                    ds -= self.track.total_length
                self.s_unwrapped += ds
            except Exception:
                self.breached = True
                return
            self.xc = np.array([self.rel.s, self.rel.e_lat, self.rel.mu,
                                self.rel.vx, self.rel.vy, self.rel.r])
        if abs(self.rel.e_lat) > 2 * self.track.half_width:
            self.breached = True


def run_episode(track: Track, params: VehicleParams, terminal_set: TerminalSet,
                policy: PolicySpec, sim: SimConfig,
                filter_cfg: FilterConfig | None = None) -> SimLog:
    """Fixed-step episode; deterministic for a given seed and configs."""
    loop = ClosedLoop(track, params, terminal_set, sim, filter_cfg)
    base = make_policy(policy, track, params)
    n_steps = int(round(sim.duration / sim.Ts))
    records = []
    breach_time = None
    for k in range(n_steps):
        u_d = policy_eval(policy, loop.state, track, loop.t, params, _base=base)
        records.append(loop.step(u_d))
        if loop.breached:
            breach_time = loop.t
            # sentinel record so serialized logs carry the breach
            last = records[-1]
            records.append(SimRecord(**{**last.__dict__,
                                        "t": loop.t, "status": "breach"}))
            break
    laps = (loop.s_unwrapped - sim.start_s) / track.total_length
    return SimLog(records, breach=loop.breached, breach_time=breach_time, laps=laps)


# -- log serialization ---------------------------------------------------------

def _format(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def export_log(log: SimLog, fmt: str = "csv") -> str:
    """Render a log as CSV or JSONL; floats use shortest round-trip form."""
    if fmt == "csv":
        out = io.StringIO()
        out.write(",".join(LOG_COLUMNS) + "\n")
        for r in log.records:
            out.write(",".join(_format(getattr(r, c)) for c in LOG_COLUMNS) + "\n")
        return out.getvalue()
    if fmt == "jsonl":
        out = io.StringIO()
        for r in log.records:
            out.write(json.dumps({c: getattr(r, c) for c in LOG_COLUMNS}) + "\n")
        return out.getvalue()
    raise ValueError(f"unknown log format '{fmt}'")


def parse_log(text: str, fmt: str = "csv") -> SimLog:
    records = []
    if fmt == "csv":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = lines[0].split(",")
        if header != LOG_COLUMNS:
            raise ValueError("unexpected log columns")
        for ln in lines[1:]:
            parts = ln.split(",")
            kw = {}
            for name, raw in zip(LOG_COLUMNS, parts):
                kw[name] = raw if name == "status" else float(raw)
            records.append(SimRecord(**kw))
    elif fmt == "jsonl":
        for ln in text.splitlines():
            if ln.strip():
                kw = json.loads(ln)
                records.append(SimRecord(**kw))
    else:
        raise ValueError(f"unknown log format '{fmt}'")
    breach = any(r.status == "breach" for r in records)
    breach_time = next((r.t for r in records if r.status == "breach"), None)
    laps = 0.0
    if len(records) > 1:
        s_col = np.array([r.s for r in records])
        span = s_col.max() - s_col.min()
        wraps = int(np.sum(np.diff(s_col) < -0.5 * max(span, 1e-9)))
        laps = wraps + (s_col[-1] - s_col[0]) / span if span > 0 else 0.0
    return SimLog(records, breach=breach, breach_time=breach_time, laps=laps)


def save_log(log: SimLog, path, fmt: str | None = None) -> None:
    p = Path(path)
    fmt = fmt or ("jsonl" if p.suffix == ".jsonl" else "csv")
    p.write_text(export_log(log, fmt))


def load_log(path) -> SimLog:
    p = Path(path)
    fmt = "jsonl" if p.suffix == ".jsonl" else "csv"
    return parse_log(p.read_text(), fmt)
