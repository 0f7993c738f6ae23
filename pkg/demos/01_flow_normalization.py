"""
Splitting a flow into scale and shape
=====================================

A general flow is a set of 3D query points and their future positions.
Normalizing separates how far each point travels from the shape of its path.
"""

import numpy as np

from genflow import GeneralFlow, NormMode, compute_deltas, denormalize, normalize

# three queries: one slides along x, one arcs upward, one stays put
queries = np.array([[0.0, 0.0, 0.0], [0.2, 0.0, 0.0], [0.5, 0.5, 0.0]])
traj = np.array([
    [[0.1, 0.0, 0.0], [0.2, 0.0, 0.0], [0.3, 0.0, 0.0]],
    [[0.25, 0.0, 0.05], [0.28, 0.0, 0.12], [0.28, 0.0, 0.2]],
    [[0.5, 0.5, 0.0]] * 3,
])
flow = GeneralFlow(queries, traj)
deltas = compute_deltas(flow)
print("path lengths:", deltas.total_lengths())

# TLN divides by path length, so every moving query has unit path length
tln = normalize(deltas, NormMode.TLN)
print("TLN scales:", tln.scales)
print("unit path lengths:", np.linalg.norm(tln.unit_deltas, axis=2).sum(axis=1))

# TDN divides by net displacement, SDN by each step on its own
for mode in (NormMode.TDN, NormMode.SDN):
    nf = normalize(deltas, mode)
    err = np.abs(denormalize(nf).deltas - deltas.deltas).max()
    print(f"{mode.value} scales shape {nf.scales.shape}, round-trip error {err:.1e}")

# the static query is degenerate: zero scale, zero shape
print("static query unit deltas:", tln.unit_deltas[2].tolist())
