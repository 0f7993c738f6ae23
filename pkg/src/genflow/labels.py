"""Ground-truth flow labels from object pose tracks.

Query points are sampled on object parts at the start of a clip and carried
forward by each part's relative motion ``pose(t) ∘ pose(t0)^-1``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .articulation import ArticulatedObject, PoseTrack
from .errors import LookupFailure, ParameterError, RangeError
from .flow import GeneralFlow, accumulate, compute_deltas
from .geometry import as_points, se3_apply

log = logging.getLogger(__name__)

DEFAULT_SHAKE_THRESHOLD = 0.002


@dataclass(frozen=True)
class ClipSpec:
    duration: float = 1.5
    interval: float = 0.15
    steps: int = 3

    def __post_init__(self):
        if not self.duration > 0:
            raise ParameterError("clip duration must be positive")
        if not self.interval > 0:
            raise ParameterError("clip interval must be positive")
        if self.steps < 1:
            raise ParameterError("clip needs at least one step")

    @property
    def timestep(self):
        return self.duration / self.steps


def _start_pose(obj, part, track, clip_start):
    if track is None:
        return obj.part_pose(part)
    return track.pose_at(part, clip_start)


def sample_part_points(obj: ArticulatedObject, part, n, seed=0, track: PoseTrack | None = None,
                       clip_start=0.0):
    """Draw ``n`` points of ``part`` uniformly, posed at the clip start.

    Sampling is without replacement unless ``n`` exceeds the part size. Without
    a track the object's current joint state is used.
    """
    if n < 1:
        raise ParameterError("n must be at least 1")
    if part not in obj.parts:
        raise LookupFailure(f"object {obj.name!r} has no part {part!r}")
    cloud = obj.parts[part]
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(cloud), size=n, replace=n > len(cloud))
    return se3_apply(_start_pose(obj, part, track, clip_start), cloud.positions[idx])


def sample_object_points(obj: ArticulatedObject, n, seed=0, parts=None, track=None, clip_start=0.0):
    """Sample ``n`` points uniformly over the union of ``parts`` (all by default).

    Returns ``(points, part_names)``.
    """
    parts = list(obj.parts) if parts is None else list(parts)
    for p in parts:
        if p not in obj.parts:
            raise LookupFailure(f"object {obj.name!r} has no part {p!r}")
    sizes = np.array([len(obj.parts[p]) for p in parts])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    flat = rng.choice(total, size=n, replace=n > total)
    owner = np.searchsorted(np.cumsum(sizes), flat, side="right")
    offset = flat - np.concatenate([[0], np.cumsum(sizes)[:-1]])[owner]
    points = np.empty((n, 3))
    for k, p in enumerate(parts):
        sel = owner == k
        if np.any(sel):
            T = _start_pose(obj, p, track, clip_start)
            points[sel] = se3_apply(T, obj.parts[p].positions[offset[sel]])
    return points, np.array([parts[k] for k in owner], dtype=object)


def extract_flow(obj: ArticulatedObject, track: PoseTrack, clip: ClipSpec, clip_start, queries,
                 parts) -> GeneralFlow:
    """Flow of world-frame ``queries`` assigned to ``parts`` over one clip."""
    q = as_points(queries, "queries")
    parts = list(parts)
    if len(parts) != len(q):
        raise ParameterError("one part assignment per query is required")
    t_end = clip_start + clip.duration
    if not track.covers(clip_start, t_end):
        raise RangeError(f"clip [{clip_start}, {t_end}] outside track [{track.start}, {track.end}]")
    for p in set(parts):
        if p not in obj.parts or p not in track.parts:
            raise LookupFailure(f"query assigned to unknown part {p!r}")
    times = clip_start + clip.timestep * np.arange(1, clip.steps + 1)
    traj = np.empty((len(q), clip.steps, 3))
    parts_arr = np.array(parts, dtype=object)
    for p in set(parts):
        sel = parts_arr == p
        inv0 = track.pose_at(p, clip_start).inverse()
        for k, t in enumerate(times):
            rel = track.pose_at(p, min(t, track.end)) @ inv0
            traj[sel, k] = se3_apply(rel, q[sel])
    return GeneralFlow(q, traj, clip.timestep)


def camera_shake_correction(flow: GeneralFlow, static_threshold=DEFAULT_SHAKE_THRESHOLD) -> GeneralFlow:
    """Remove the mean per-step motion of near-static trajectories from all.

    A trajectory is static when its path length is below ``static_threshold``
    (meters). With no static trajectory the flow is returned unchanged.
    """
    d = compute_deltas(flow)
    static = d.total_lengths() < static_threshold
    if not np.any(static):
        return flow
    shake = d.deltas[static].mean(axis=0)
    return accumulate(flow.queries, d.deltas - shake[None], flow.timestep)


def add_label_noise(flow: GeneralFlow, sigma, seed=0) -> GeneralFlow:
    """Add isotropic Gaussian noise to every future position."""
    if sigma < 0:
        raise ParameterError("sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=flow.trajectories.shape) if sigma > 0 else 0.0
    return GeneralFlow(flow.queries, flow.trajectories + noise, flow.timestep)


def slice_clips(track: PoseTrack | None, clip: ClipSpec, action_window, prefix_extension=4):
    """Start times of the sub-clips inside an action window.

    Main clips start at the window start and advance by ``clip.interval`` while
    they fit. ``prefix_extension`` extra starts are spread evenly over
    ``[start - duration, start)`` and kept only when the track covers the
    whole clip.
    """
    start, end = (float(v) for v in action_window)
    if end - start < clip.duration - 1e-9:
        log.warning("action window [%s, %s] is shorter than the clip duration %s",
                    start, end, clip.duration)
        return []
    n_main = int(np.floor((end - start - clip.duration) / clip.interval + 1e-9)) + 1
    starts = [start + k * clip.interval for k in range(n_main)]
    if prefix_extension > 0:
        spacing = clip.duration / prefix_extension
        for j in range(prefix_extension):
            s = start - clip.duration + j * spacing
            if track is None or track.covers(s, s + clip.duration):
                starts.append(s)
    return sorted(starts)
