"""Closed-loop track built from constant-curvature segments.

Provides curvature lookup, exact global<->curvilinear transforms, the
front-corner error map used by the track constraints, and the
lookahead-curvature heuristic for the terminal set.

Conventions: positive curvature turns left; positive lateral error is left
of the centerline; heading errors are wrapped to (-pi, pi].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .vehicle import VehicleParams, VehicleState

_CLOSURE_POS_TOL = 1e-6
_CLOSURE_ANG_TOL = 1e-6
_HEADING_SUM_TOL = 1e-9


class TrackError(ValueError):
    """Malformed track document or closure violation."""


class ProjectionError(RuntimeError):
    """Centerline projection failed to converge; carries the best candidate."""

    def __init__(self, msg, best_s=None):
        super().__init__(msg)
        self.best_s = best_s


@dataclass(frozen=True)
class TrackSegment:
    curvature: float   # 1/m, signed, 0 = straight
    length: float      # arc length, m

    def __post_init__(self):
        if self.length <= 0:
            raise TrackError("segment length must be > 0")


@dataclass
class CenterlinePose:
    s: float
    x_t: float
    y_t: float
    psi_t: float
    c: float


@dataclass
class TrackRelativeState:
    """Curvilinear vehicle state: lateral/heading error plus body velocities."""

    e_lat: float = 0.0
    mu: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    r: float = 0.0
    s: float = 0.0  # arc-length progress, carried alongside

    def as_array(self) -> np.ndarray:
        return np.array([self.e_lat, self.mu, self.vx, self.vy, self.r])

    @classmethod
    def from_array(cls, xr, s=0.0) -> "TrackRelativeState":
        e, mu, vx, vy, r = (float(v) for v in xr)
        return cls(e, mu, vx, vy, r, float(s))


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = -((-np.asarray(a) + np.pi) % (2 * np.pi) - np.pi)
    return float(w) if np.isscalar(a) or np.ndim(a) == 0 else w


class Track:
    """Immutable after construction; all queries are read-only."""

    def __init__(self, segments, half_width, start_pose=(0.0, 0.0, 0.0), closed=True):
        if not segments:
            raise TrackError("track needs at least one segment")
        if half_width <= 0:
            raise TrackError("half_width must be > 0")
        self.segments = [TrackSegment(float(s.curvature), float(s.length))
                         if isinstance(s, TrackSegment) else TrackSegment(*s)
                         for s in segments]
        self.half_width = float(half_width)
        self.start_pose = tuple(float(v) for v in start_pose)
        self.closed = bool(closed)

        # cumulative arc length and segment start poses
        self._seg_curv = np.array([s.curvature for s in self.segments])
        self._s0 = np.zeros(len(self.segments) + 1)
        self._poses = np.zeros((len(self.segments) + 1, 3))
        self._poses[0] = self.start_pose
        for i, seg in enumerate(self.segments):
            self._s0[i + 1] = self._s0[i] + seg.length
            self._poses[i + 1] = _advance(self._poses[i], seg.curvature, seg.length)
        self.total_length = float(self._s0[-1])

        if self.closed:
            self._check_closure()

    def _check_closure(self):
        heading_sum = sum(s.curvature * s.length for s in self.segments)
        gap = abs(math.remainder(heading_sum, 2 * math.pi))
        if gap > _HEADING_SUM_TOL:
            raise TrackError(f"closed track heading sum {heading_sum:.9f} rad is "
                             f"{gap:.3e} rad away from a multiple of 2*pi")
        end = self._poses[-1]
        dx, dy = end[0] - self.start_pose[0], end[1] - self.start_pose[1]
        dpsi = abs(math.remainder(end[2] - self.start_pose[2], 2 * math.pi))
        if math.hypot(dx, dy) > _CLOSURE_POS_TOL or dpsi > _CLOSURE_ANG_TOL:
            raise TrackError(f"closed track endpoint misses start pose by "
                             f"({dx:.2e}, {dy:.2e}) m / {dpsi:.2e} rad")

    @property
    def max_curvature(self) -> float:
        return max(abs(s.curvature) for s in self.segments)

    def wrap_s(self, s: float) -> float:
        if self.closed:
            return float(s % self.total_length)
        return float(min(max(s, 0.0), self.total_length))

    def segment_index(self, s: float) -> int:
        s = self.wrap_s(s)
        i = int(np.searchsorted(self._s0, s, side="right") - 1)
        return min(max(i, 0), len(self.segments) - 1)

    def curvature_at(self, s: float) -> float:
        """Piecewise-constant, right-continuous at segment boundaries."""
        return self.segments[self.segment_index(s)].curvature

    def curvatures_at(self, s) -> np.ndarray:
        """Vectorized curvature lookup for an array of arc lengths."""
        s = np.asarray(s, dtype=float)
        if self.closed:
            s = s % self.total_length
        else:
            s = np.clip(s, 0.0, self.total_length)
        idx = np.clip(np.searchsorted(self._s0, s, side="right") - 1,
                      0, len(self.segments) - 1)
        return self._seg_curv[idx]

    def centerline_pose_at(self, s: float) -> CenterlinePose:
        sw = self.wrap_s(s)
        i = self.segment_index(sw)
        x, y, psi = _advance(self._poses[i], self.segments[i].curvature, sw - self._s0[i])
        return CenterlinePose(sw, x, y, psi, self.segments[i].curvature)

    def sample_centerline(self, ds: float = 0.05) -> np.ndarray:
        """(M, 2) centerline points, roughly ds apart, start included."""
        n = max(int(self.total_length / ds), 2)
        pts = np.empty((n, 2))
        for k in range(n):
            p = self.centerline_pose_at(k * self.total_length / n)
            pts[k] = (p.x_t, p.y_t)
        return pts

    # -- projection and frame transforms ------------------------------------

    def project(self, px: float, py: float, s_hint=None, tol=1e-12, max_iter=30):
        """Arc length of the nearest centerline point.

        Newton iteration on the tangency condition, seeded at s_hint when
        given (ties broken toward the hint), else at the global coarse
        minimum. Raises ProjectionError if the iteration stalls.
        """
        if s_hint is None:
            pts = self.sample_centerline(ds=min(0.05, self.total_length / 16))
            d2 = (pts[:, 0] - px) ** 2 + (pts[:, 1] - py) ** 2
            k = int(np.argmin(d2))
            s = k * self.total_length / len(pts)
        else:
            # local seed grid so a slightly stale hint still lands in the right
            # basin; equidistant candidates break toward the hint
            s0 = self.wrap_s(s_hint)
            offsets = np.linspace(-0.3, 0.3, 13)
            d2 = np.array([self._dist2(px, py, self.wrap_s(s0 + o)) for o in offsets])
            near = d2 <= d2.min() + 1e-12
            best = min(np.flatnonzero(near), key=lambda k: abs(offsets[k]))
            s = self.wrap_s(s0 + offsets[best])

        for _ in range(max_iter):
            pose = self.centerline_pose_at(s)
            tx, ty = math.cos(pose.psi_t), math.sin(pose.psi_t)
            ex, ey = px - pose.x_t, py - pose.y_t
            g = ex * tx + ey * ty                       # tangential misalignment
            e_lat = -ty * ex + tx * ey
            dg = 1.0 - pose.c * e_lat
            if abs(dg) < 1e-9:
                break
            step = g / dg
            s = self.wrap_s(s + step)
            if abs(step) < tol:
                return s
        if s_hint is not None:
            # stale hint landed in the wrong basin; retry from a global seed
            return self.project(px, py, s_hint=None, tol=tol, max_iter=max_iter)
        raise ProjectionError("projection did not converge", best_s=s)

    def _dist2(self, px, py, s):
        p = self.centerline_pose_at(s)
        return (p.x_t - px) ** 2 + (p.y_t - py) ** 2

    def global_to_relative(self, state: VehicleState, s_hint=None) -> TrackRelativeState:
        s = self.project(state.px, state.py, s_hint=s_hint)
        pose = self.centerline_pose_at(s)
        sp, cp = math.sin(pose.psi_t), math.cos(pose.psi_t)
        e_lat = -sp * (state.px - pose.x_t) + cp * (state.py - pose.y_t)
        mu = wrap_angle(state.psi - pose.psi_t)
        return TrackRelativeState(e_lat, mu, state.vx, state.vy, state.r, s)

    def relative_to_global(self, rel: TrackRelativeState) -> VehicleState:
        pose = self.centerline_pose_at(rel.s)
        sp, cp = math.sin(pose.psi_t), math.cos(pose.psi_t)
        return VehicleState(
            px=pose.x_t - rel.e_lat * sp,
            py=pose.y_t + rel.e_lat * cp,
            psi=wrap_angle(pose.psi_t + rel.mu),
            vx=rel.vx, vy=rel.vy, r=rel.r,
        )

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "half_width": self.half_width,
            "start_pose": list(self.start_pose),
            "closed": self.closed,
            "segments": [{"curvature": s.curvature, "length": s.length} for s in self.segments],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def corner_errors(e_lat, mu, p: VehicleParams):
    """Front-corner lateral errors (e_lf, e_rf) of the vehicle bounding box."""
    s, c = np.sin(mu), np.cos(mu)
    e_lf = e_lat + p.lf * s + 0.5 * p.w * c
    e_rf = e_lat + p.lf * s - 0.5 * p.w * c
    return e_lf, e_rf


@dataclass(frozen=True)
class LookaheadConfig:
    """Affine map from drivetrain command to anticipated speed, clamped."""

    v_gain: float = 2.0
    v_offset: float = 0.5
    v_lo: float = 0.5
    v_hi: float = 3.0


def lookahead_curvature(track: Track, s: float, u_d_tau: float,
                        horizon_time: float, cfg: LookaheadConfig = LookaheadConfig()) -> float:
    """Curvature a command-dependent distance ahead of s.

    The distance is the anticipated speed (affine in the desired drivetrain
    command, clamped to [v_lo, v_hi]) times the horizon time N*Ts.
    """
    v = min(max(cfg.v_gain * u_d_tau + cfg.v_offset, cfg.v_lo), cfg.v_hi)
    return track.curvature_at(s + v * horizon_time)


def load_track(source) -> Track:
    """Build a validated Track from a JSON document, path, or dict."""
    if isinstance(source, dict):
        doc = source
    else:
        text = Path(source).read_text() if Path(str(source)).exists() else str(source)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise TrackError(f"track document is not valid JSON: {e}") from e
    try:
        segments = [TrackSegment(float(s["curvature"]), float(s["length"]))
                    for s in doc["segments"]]
        return Track(segments, float(doc["half_width"]),
                     tuple(doc.get("start_pose", (0.0, 0.0, 0.0))),
                     bool(doc.get("closed", True)))
    except KeyError as e:
        raise TrackError(f"track document missing key {e}") from e


def _advance(pose, c, ds):
    """Move ds along a constant-curvature arc from pose (x, y, psi)."""
    x, y, psi = pose
    if abs(c) < 1e-14:
        return (x + ds * math.cos(psi), y + ds * math.sin(psi), psi)
    psi1 = psi + c * ds
    return (x + (math.sin(psi1) - math.sin(psi)) / c,
            y + (math.cos(psi) - math.cos(psi1)) / c,
            psi1)
