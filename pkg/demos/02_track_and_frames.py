"""Track geometry: centerline, curvature profile, frame transforms, corners.

Run from the repository root:  python3 demos/02_track_and_frames.py
"""

import numpy as np

from trackguard import VehicleParams, corner_errors, load_track
from trackguard.track import TrackRelativeState

track = load_track("configs/track.json")
print(f"track: {len(track.segments)} segments, length {track.total_length:.3f} m, "
      f"half-width {track.half_width} m, closed={track.closed}")

print("\ncurvature profile:")
for s in np.linspace(0, track.total_length, 13, endpoint=False):
    pose = track.centerline_pose_at(float(s))
    print(f"  s={s:6.2f}  c={pose.c:+.2f} 1/m   ({pose.x_t:+.2f}, {pose.y_t:+.2f})")

# global -> relative -> global round trip
rel = TrackRelativeState(e_lat=0.12, mu=-0.3, vx=1.4, vy=0.05, r=0.8, s=4.2)
state = track.relative_to_global(rel)
back = track.global_to_relative(state, s_hint=4.0)
print(f"\nround trip: e_lat {rel.e_lat} -> {back.e_lat:.12f}, "
      f"mu {rel.mu} -> {back.mu:.12f}, s {rel.s} -> {back.s:.12f}")

# the two front-corner errors that the filter constrains
p = VehicleParams()
print("\nfront corner errors (e_lf, e_rf) across heading errors at e_lat=0.1:")
for mu in (-0.4, 0.0, 0.4):
    e_lf, e_rf = corner_errors(0.1, mu, p)
    print(f"  mu={mu:+.1f}: e_lf={e_lf:+.4f}, e_rf={e_rf:+.4f}  "
          f"(bound: +/-{track.half_width})")
