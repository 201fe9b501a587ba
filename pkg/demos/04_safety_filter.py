"""Closed-loop episodes: what the filter does and does not allow.

Three runs on the shipped track and terminal set:
  1. filter OFF under a blind constant-throttle policy -> leaves the track
  2. the same policy with the filter ON -> held inside indefinitely
  3. a fault-injected pure-pursuit driver (corner-cutting, full throttle)
     with the filter ON -> interventions exactly where the faults bite

Run from the repository root:  python3 demos/04_safety_filter.py
"""

import numpy as np

from trackguard import (PolicySpec, SimConfig, TerminalSet, VehicleParams,
                        load_track, run_episode)

p = VehicleParams.from_file("configs/vehicle.json")
track = load_track("configs/track.json")
ts = TerminalSet.load("artifacts/terminal_set.json")

blind = PolicySpec(kind="constant", delta=0.0, tau=0.6)
off = run_episode(track, p, ts, blind, SimConfig(duration=8.0, filter_on=False))
print(f"filter OFF, constant throttle: breach={off.breach} "
      f"at t={off.breach_time}s after {len(off)} steps")

on = run_episode(track, p, ts, blind, SimConfig(duration=8.0, filter_on=True))
corners = np.maximum(np.abs(on.column("e_lf")), np.abs(on.column("e_rf")))
print(f"filter ON,  constant throttle: breach={on.breach}, "
      f"max corner {corners.max():.3f} m vs half-width {track.half_width} m")

faults = [(2.0, 2.7, 0.0, 1.0), (4.5, 5.2, -0.25, 1.0), (7.0, 7.7, 0.0, 1.0)]
driver = PolicySpec(kind="pure-pursuit-with-faults", v_target=1.5, faults=faults)
log = run_episode(track, p, ts, driver, SimConfig(duration=10.0))
iv = log.column("intervention")
tcol = log.column("t")
print(f"\nfault-injected driver: breach={log.breach}, laps={log.laps:.2f}")
print(f"  intervention p50/p95/max: {np.percentile(iv, 50):.2e} / "
      f"{np.percentile(iv, 95):.3f} / {iv.max():.3f}")
print(f"  solve time p50/p95: {np.percentile(log.column('solve_ms'), 50):.1f} / "
      f"{np.percentile(log.column('solve_ms'), 95):.1f} ms")
print("\nintervention trace around each fault window:")
for t0, t1, *_ in faults:
    sel = (tcol >= t0 - 0.3) & (tcol <= t1 + 0.8)
    print(f"  window [{t0}, {t1}]: max intervention {iv[sel].max():.3f}")
