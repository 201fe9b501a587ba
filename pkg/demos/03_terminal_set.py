"""Offline pipeline at reduced scale: steady states, LMI synthesis,
nonlinear verification, and the shrink loop.

The shipped artifact (artifacts/terminal_set.json) was produced the same
way at paper scale (21 grid points over +/-2.5 1/m, 1000 restarts); this
demo uses a smaller grid so it finishes in a few seconds.

Run from the repository root:  python3 demos/03_terminal_set.py
"""

import numpy as np

from trackguard import (SynthesisConfig, VehicleParams, compute_steady_state,
                        membership, shrink_until_verified, synthesize)

p = VehicleParams()
cfg = SynthesisConfig(n_c=9, c_max=2.0, n_verify_starts=300, verify_iters=120)

print("steady cornering states over curvature:")
for c in np.linspace(-cfg.c_max, cfg.c_max, 5):
    ss = compute_steady_state(float(c), cfg.v_x_target, p, cfg.Ts)
    mu, _, vy, r = ss.x_r_e[1], ss.x_r_e[2], ss.x_r_e[3], ss.x_r_e[4]
    print(f"  c={c:+.2f}: mu={mu:+.4f} vy={vy:+.4f} r={r:+.3f} "
          f"delta={ss.u_e[0]:+.4f} tau={ss.u_e[1]:.4f}")

print("\nsolving the log-det LMI program...")
ts, report = synthesize(cfg, p)
print(f"  solver {report.solver} in {report.solve_time:.2f} s")
print(f"  lyapunov decrease residuals: max {report.lyapunov_residuals.max():.2e}")
print(f"  ellipsoid semi-axes: {np.sqrt(np.diag(np.linalg.inv(ts.P))).round(4)}")

print("\nshrinking until the nonlinear verification passes...")
final = shrink_until_verified(ts, p, cfg)
v = final.provenance["verification"]
print(f"  alpha = {final.alpha:.4f}, worst objective {v['worst_objective']:.4f} "
      f"at c = {v['worst_curvature']:+.3f}")

value, inside = membership(final, final.grid[len(final.grid) // 2].x_r_e, 0.0)
print(f"\nmembership at the c=0 steady state: value {value:.2e}, inside={inside}")
off = final.grid[len(final.grid) // 2].x_r_e + np.array([0.1, 0, 0, 0, 0])
value, inside = membership(final, off, 0.0)
print(f"membership 10 cm off the centerline:  value {value:.3f}, inside={inside}")
