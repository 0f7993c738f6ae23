"""Dataset balancing and training-time augmentations.

Scale rebalance clusters trajectory scales with 1-D k-means and resamples the
minority clusters toward a softmax-smoothed distribution. Hand mask and query
point sampling augmentations randomize the scene and query inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, ParameterError
from .geometry import PointCloud, as_points

KMEANS_TOL = 1e-9
KMEANS_MAX_ITER = 100
DEFAULT_CLUSTERS = 4
DEFAULT_TAU = 1.0


@dataclass(frozen=True, eq=False)
class ScaleClusters:
    assignments: np.ndarray
    centers: np.ndarray
    ratios: np.ndarray

    def __post_init__(self):
        if abs(float(np.sum(self.ratios)) - 1.0) > 1e-9:
            raise ParameterError("cluster ratios must sum to 1")
        if np.any(np.diff(self.centers) < 0):
            raise ParameterError("cluster centers must be sorted ascending")

    @property
    def k(self):
        return len(self.centers)

    def counts(self):
        return np.bincount(self.assignments, minlength=self.k)


def _check_probs(probs, name):
    p = np.asarray(probs, dtype=np.float64)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ParameterError(f"{name} must be nonnegative and sum to 1")
    return tuple(float(v) for v in p)


@dataclass(frozen=True)
class AugmentConfig:
    hma_probs: tuple = (0.5, 0.2, 0.3)
    hma_radius: float = 0.12
    qps_probs: tuple = (0.7, 0.3)

    def __post_init__(self):
        object.__setattr__(self, "hma_probs", _check_probs(self.hma_probs, "hma_probs"))
        object.__setattr__(self, "qps_probs", _check_probs(self.qps_probs, "qps_probs"))
        if len(self.hma_probs) != 3 or len(self.qps_probs) != 2:
            raise ParameterError("hma_probs needs 3 entries and qps_probs 2")
        if not self.hma_radius > 0:
            raise ParameterError("hma_radius must be positive")

    @classmethod
    def from_json(cls, d):
        unknown = set(d) - {"hma_probs", "hma_radius", "qps_probs"}
        if unknown:
            raise ConfigurationError(f"unknown augment fields: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})

    @classmethod
    def load(cls, path):
        doc = json.loads(Path(path).read_text())
        return cls.from_json(doc.get("augment", doc))

    def to_json(self):
        return {"hma_probs": list(self.hma_probs), "hma_radius": self.hma_radius,
                "qps_probs": list(self.qps_probs)}


# -- scale rebalance ---------------------------------------------------------

def _kmeanspp(x, k, rng):
    centers = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.array(centers)[None]) ** 2, axis=1)
        total = d2.sum()
        if total > 0:
            centers.append(x[rng.choice(len(x), p=d2 / total)])
        else:
            centers.append(x[rng.integers(len(x))])
    return np.array(centers, dtype=np.float64)


def kmeans_1d(values, k=DEFAULT_CLUSTERS, seed=0) -> ScaleClusters:
    """Lloyd's k-means on scalars with k-means++ seeding.

    Iterates until no center moves by more than ``1e-9`` or 100 rounds pass.
    A cluster that empties is re-seeded at the point farthest from its
    currently assigned center. Centers are returned sorted and assignments
    relabelled to match.
    """
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if k < 1:
        raise ParameterError("k must be at least 1")
    if len(x) < k:
        raise ParameterError(f"need at least k={k} values, got {len(x)}")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(x, k, rng)
    for _ in range(KMEANS_MAX_ITER):
        assign = np.argmin(np.abs(x[:, None] - centers[None]), axis=1)
        new = centers.copy()
        for j in range(k):
            members = x[assign == j]
            if len(members):
                new[j] = members.mean()
            else:
                far = int(np.argmax(np.abs(x - centers[assign])))
                new[j] = x[far]
                assign[far] = j
        shift = np.max(np.abs(new - centers))
        centers = new
        if shift < KMEANS_TOL:
            break
    assign = np.argmin(np.abs(x[:, None] - centers[None]), axis=1)
    order = np.argsort(centers, kind="stable")
    relabel = np.empty(k, dtype=np.intp)
    relabel[order] = np.arange(k)
    assign = relabel[assign]
    ratios = np.bincount(assign, minlength=k) / len(x)
    return ScaleClusters(assign, centers[order], ratios)


def rebalance_weights(clusters_or_ratios, tau=DEFAULT_TAU) -> np.ndarray:
    """Softmax of cluster ratios at temperature ``tau``: the target shape."""
    if not tau > 0:
        raise ParameterError("tau must be positive")
    r = getattr(clusters_or_ratios, "ratios", clusters_or_ratios)
    z = np.asarray(r, dtype=np.float64) / tau
    e = np.exp(z - z.max())
    return e / e.sum()


def rebalanced_counts(clusters: ScaleClusters, tau=DEFAULT_TAU) -> np.ndarray:
    """Cluster sizes after resampling.

    The most populated cluster keeps its size; every other cluster is scaled
    to ``count_max * w_i / w_max`` (rounded) where ``w`` is the softmax target.
    Non-empty clusters keep at least one point.
    """
    counts = clusters.counts()
    w = rebalance_weights(clusters, tau)
    big = int(np.argmax(counts))
    target = np.rint(counts[big] * w / w[big]).astype(np.int64)
    target[big] = counts[big]
    target = np.where(counts > 0, np.maximum(target, 1), 0)
    return target


def rebalance_indices(clusters: ScaleClusters, tau=DEFAULT_TAU, seed=0) -> np.ndarray:
    """Item indices of the rebalanced dataset.

    The largest cluster appears once per member; the others are drawn with
    replacement to their :func:`rebalanced_counts` size. Output is grouped by
    cluster in ascending center order.
    """
    counts = clusters.counts()
    target = rebalanced_counts(clusters, tau)
    big = int(np.argmax(counts))
    rng = np.random.default_rng(seed)
    out = []
    for j in range(clusters.k):
        members = np.flatnonzero(clusters.assignments == j)
        if j == big:
            out.append(members)
        elif len(members):
            out.append(rng.choice(members, size=int(target[j]), replace=True))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.intp)


def total_variation_to_uniform(counts) -> float:
    p = np.asarray(counts, dtype=np.float64)
    p = p / p.sum()
    return float(0.5 * np.abs(p - 1.0 / len(p)).sum())


# -- augmentations -----------------------------------------------------------

class HandMaskResult(NamedTuple):
    cloud: PointCloud
    kept: np.ndarray
    rule: int
    anchor: int | None


class QuerySampleResult(NamedTuple):
    indices: np.ndarray
    rule: int
    anchor: int | None


def _draw_rule(rng, probs):
    return int(np.searchsorted(np.cumsum(probs), rng.random(), side="right")) + 1


def hma_rule(seed, config: AugmentConfig = AugmentConfig()):
    """The hand-mask rule (1, 2 or 3) a given seed selects."""
    return min(_draw_rule(np.random.default_rng(seed), config.hma_probs), 3)


def hma_augment(scene: PointCloud, hand_indices, rng_seed=0,
                config: AugmentConfig = AugmentConfig()) -> HandMaskResult:
    """Randomly hide embodiment points.

    Rule 1 removes every hand point, rule 2 keeps the scene and rule 3 removes
    the hand points within ``hma_radius`` of a random hand anchor (anchor
    included). Non-hand points are never touched.
    """
    hand = np.unique(np.asarray(hand_indices, dtype=np.intp))
    if len(hand) and (hand[0] < 0 or hand[-1] >= len(scene)):
        raise ParameterError("hand index out of range")
    rng = np.random.default_rng(rng_seed)
    rule = min(_draw_rule(rng, config.hma_probs), 3)
    anchor = None
    drop = np.zeros(len(scene), dtype=bool)
    if rule == 1:
        drop[hand] = True
    elif rule == 3 and len(hand):
        anchor = int(hand[rng.integers(len(hand))])
        d = np.linalg.norm(scene.positions[hand] - scene.positions[anchor], axis=1)
        drop[hand[d <= config.hma_radius]] = True
    kept = np.flatnonzero(~drop)
    return HandMaskResult(scene.select(kept), kept, rule, anchor)


def qps_augment(pool, n, rng_seed=0, config: AugmentConfig = AugmentConfig()) -> QuerySampleResult:
    """Pick ``n`` query indices from ``pool``.

    Rule 1 samples uniformly without replacement; rule 2 takes the ``n``
    nearest pool points to a random anchor, ties going to the lower index.
    """
    pts = pool.positions if isinstance(pool, PointCloud) else as_points(pool, "pool")
    if n > len(pts):
        raise ParameterError(f"cannot select {n} queries from a pool of {len(pts)}")
    if n < 0:
        raise ParameterError("n must be nonnegative")
    rng = np.random.default_rng(rng_seed)
    rule = min(_draw_rule(rng, config.qps_probs), 2)
    if rule == 1:
        return QuerySampleResult(rng.choice(len(pts), size=n, replace=False), 1, None)
    anchor = int(rng.integers(len(pts)))
    d = np.linalg.norm(pts - pts[anchor], axis=1)
    order = np.argsort(d, kind="stable")
    return QuerySampleResult(order[:n], 2, anchor)


def derive_seed(base_seed, item_index):
    """Per-item seed for parallel dataset processing."""
    return int(base_seed) ^ int(item_index)
