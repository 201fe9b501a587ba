"""Tour of the vehicle model: tire curves, step response, Jacobian accuracy.

Run from the repository root:  python3 demos/01_vehicle_model.py
"""

import numpy as np

from trackguard import VehicleParams, VehicleState, ControlInput
from trackguard.vehicle import (tire_forces, discrete_step, dynamics_array,
                                jacobians_array, steady_throttle)

p = VehicleParams()
print("vehicle:", p)

# Pacejka lateral force over slip angle: peak and saturation
print("\nfront tire curve D*sin(C*atan(B*alpha)):")
for alpha in (0.02, 0.05, 0.1, 0.2, 0.4, 0.8):
    st = VehicleState(vx=1.5, vy=-np.tan(alpha) * 1.5)
    tf = tire_forces(st, ControlInput(), p)
    print(f"  alpha={tf.alpha_r:+.3f} rad -> Fyr={tf.Fyr:+.3f} N (peak {p.Dr} N)")

# hold 1.2 m/s on a straight: throttle from the force balance
tau = steady_throttle(1.2, p)
print(f"\nsteady throttle at 1.2 m/s: tau = {tau:.4f}")
st = VehicleState(vx=1.2)
for _ in range(80):
    st = discrete_step(st, ControlInput(0.0, tau), p, 0.0125)
print(f"after 1 s: vx = {st.vx:.6f} (should still be 1.2)")

# full-throttle launch
st = VehicleState(vx=0.5)
for k in range(400):
    st = discrete_step(st, ControlInput(0.0, 1.0), p, 0.0125)
print(f"after 5 s at full throttle: vx = {st.vx:.2f} m/s")

# analytic Jacobians against central differences at a random point
rng = np.random.default_rng(0)
x = np.array([0, 0, 0.3, 2.0, 0.2, 1.0])
u = np.array([0.1, 0.4])
A, B = jacobians_array(x, u, p, 0.0125)
h = 1e-6
worst = 0.0
for j in range(6):
    d = np.zeros(6); d[j] = h
    col = ((x + d + 0.0125 * dynamics_array(x + d, u, p))
           - (x - d + 0.0125 * dynamics_array(x - d, u, p))) / (2 * h)
    worst = max(worst, np.abs(A[:, j] - col).max())
print(f"\nJacobian vs finite differences: worst abs error {worst:.2e}")
