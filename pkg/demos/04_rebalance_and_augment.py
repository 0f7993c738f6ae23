"""
Balancing flow scales and masking the hand
==========================================

Short motions dominate real datasets. Clustering path lengths and resampling
the rare clusters toward a softened target flattens the scale distribution.
"""

import numpy as np

from genflow import AugmentConfig, PointCloud, hma_augment, kmeans_1d, qps_augment
from genflow.data import rebalance_indices, rebalance_weights, total_variation_to_uniform

rng = np.random.default_rng(0)
lengths = np.concatenate([rng.normal(0.05, 0.01, 700), rng.normal(0.2, 0.02, 200), rng.normal(0.5, 0.05, 100)])

clusters = kmeans_1d(lengths, k=3, seed=0)
print("centers:", clusters.centers.round(3), "ratios:", clusters.ratios)
print("target weights:", rebalance_weights(clusters).round(4))

idx = rebalance_indices(clusters, seed=0)
after = np.bincount(clusters.assignments[idx], minlength=3)
print("counts", clusters.counts(), "->", after)
print("TV to uniform", round(total_variation_to_uniform(clusters.counts()), 3), "->",
      round(total_variation_to_uniform(after), 3))

# hand mask: hide some or all embodiment points
scene = PointCloud(rng.uniform(-0.3, 0.3, size=(200, 3)))
hand = np.arange(50)
for seed in range(4):
    r = hma_augment(scene, hand, seed)
    print(f"seed {seed}: rule {r.rule}, kept {len(r.kept)} of {len(scene)} points")

# query sampling: uniform, or a local patch around an anchor
cfg = AugmentConfig(qps_probs=(0.0, 1.0))
patch = qps_augment(scene, 10, 3, cfg)
print("anchor", patch.anchor, "patch spread:", np.ptp(scene.positions[patch.indices], axis=0).round(3))
