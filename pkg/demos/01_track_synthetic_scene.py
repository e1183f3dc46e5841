"""Track a synthetic street scene and watch identities persist.

Builds a small scene of six road users moving at constant speed, one of
them hidden for three frames mid-run, feeds the detector output through
the tracker, and prints how many identities each agent consumed.
"""

from trafficstate import (
    AgentSpec,
    CalibrationParams,
    LineOfInterest,
    ScenarioSpec,
    Tracker,
    TrackerConfig,
    generate,
)

calib = CalibrationParams(phi=2.0, omega=2.0, delta_deg=90.0)

agents = [
    AgentSpec(class_id=i % 3, x0_m=-40.0, y0_m=12.0 * i, vx_mps=8.0 + i, vy_mps=0.0)
    for i in range(6)
]

spec = ScenarioSpec(
    agents=agents,
    duration_s=8.0,
    fps=25.0,
    calibration=calib,
    noise_std_px=0.5,            # half a pixel of detector jitter
    occlusions=[(2, 60, 62)],    # agent 2 vanishes for frames 60..62
    embedding_dim=16,
    embedding_noise_std=0.05,
    seed=42,
)

loi = LineOfInterest(a=(0.0, -10.0), b=(0.0, 80.0))
batches, truth = generate(spec, loi, interval_s=4.0)

tracker = Tracker(TrackerConfig())
snapshots = []
for frame, detections in batches:
    snapshots.extend(tracker.step(frame, detections))

print(f"frames processed : {len(batches)}")
print(f"snapshots emitted: {len(snapshots)}")
ids = sorted({s.track_id for s in snapshots})
print(f"identities used  : {ids}")

# Identity stability: with a 3-frame gap (the survivable maximum) the
# occluded agent keeps its id, so six agents need exactly six ids.
assert len(ids) == len(agents)

print("\nlast frame, live tracks:")
last_frame = max(s.frame for s in snapshots)
for s in snapshots:
    if s.frame == last_frame:
        u, v = s.centroid
        print(f"  id {s.track_id}  class {s.class_id}  "
              f"center ({u:7.1f}, {v:7.1f}) px  status {s.status.value}")
