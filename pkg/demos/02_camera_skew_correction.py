"""Correct camera skew: pixel trajectories to world meters.

A roadside camera sees the ground plane under a skew angle, so pixel
distances mean different things along each axis. Measuring one reference
object of known size calibrates the per-axis magnification; the skew
angle then unshears the coordinates.
"""

import math

from trafficstate import CalibrationParams, ReferenceObject, derive_magnification, to_world

# A lane marking block: 12 m x 3 m on the ground, 300 x 96 px in the image.
ref = ReferenceObject(true_x_m=12.0, true_y_m=3.0,
                      apparent_x_px=300.0, apparent_y_px=96.0)
phi, omega = derive_magnification(ref)
print(f"magnification: phi = {phi:.2f} px/m, omega = {omega:.2f} px/m")

params = CalibrationParams(phi=phi, omega=omega, delta_deg=75.0,
                           x0=233_800.0, y0=2_630_500.0)

# A pixel trajectory recorded by the tracker (one point per frame).
pixel_track = [(420.0 + 26.0 * k, 310.0 - 3.0 * k) for k in range(6)]

print("\npixel -> world:")
world_track = []
for x, y in pixel_track:
    wx, wy = to_world(x, y, params)
    world_track.append((wx, wy))
    print(f"  ({x:6.1f}, {y:6.1f}) px  ->  ({wx:11.2f}, {wy:11.2f}) m")

# Constant pixel steps stay constant in world space: the map is affine.
steps = [
    math.hypot(x1 - x0, y1 - y0)
    for (x0, y0), (x1, y1) in zip(world_track, world_track[1:])
]
print(f"\nper-frame ground step: {steps[0]:.3f} m "
      f"(spread {max(steps) - min(steps):.2e} m)")

# At 25 frames per second that step is a speed measurement.
print(f"implied speed: {steps[0] * 25 * 3.6:.1f} km/h")
