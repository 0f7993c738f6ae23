"""
Flow labels from an articulated door
====================================

Poses of a hinged door over time turn sampled surface points into flow labels.
Points farther from the hinge travel farther, while the path shape stays the same.
"""

import numpy as np

from genflow import ClipSpec, PoseTrack, compute_deltas, extract_flow, normalize, sample_part_points
from genflow.scenes import make_safe

safe = make_safe()

# swing the door 30 degrees over a 1.5 s clip
track = PoseTrack.from_joint_keyframes(safe, [0.0, 1.5], {"door": [0.0, np.deg2rad(30.0)]})
clip = ClipSpec(duration=1.5, interval=0.15, steps=3)

queries = sample_part_points(safe, "door", 8, seed=0)
flow = extract_flow(safe, track, clip, 0.0, queries, ["door"] * 8)
d = compute_deltas(flow)

radius = np.linalg.norm(queries[:, :2], axis=1)
for r, L in zip(radius, d.total_lengths()):
    print(f"radius {r:.3f} m  path {L:.4f} m  path/radius {L / r:.4f}")

# a point at 0.3 m moves one chord of 2 r sin(theta / 2T) per step
print("expected chord at 0.3 m:", 2 * 0.3 * np.sin(np.deg2rad(30.0) / 6))

# after TLN, all door points share the same dimensionless shape up to rotation
u = normalize(d).unit_deltas
print("unit step lengths:", np.linalg.norm(u, axis=2).round(6)[:3].tolist())
