"""Weighted rigid alignment between consecutive flow timesteps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, DegenerateInputError, ParameterError
from .flow import GeneralFlow
from .geometry import SE3Transform, as_point, as_points

DEFAULT_BETA = 1.0
COLLINEAR_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class WeightedCorrespondences:
    source: np.ndarray
    target: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        s = as_points(self.source, "source")
        t = as_points(self.target, "target")
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if s.shape != t.shape or len(w) != len(s):
            raise ParameterError("source, target and weights must have the same length")
        if np.any(w < 0):
            raise ParameterError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ParameterError("weights must sum to 1")
        object.__setattr__(self, "source", s)
        object.__setattr__(self, "target", t)
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, source, target, weights=None):
        s = as_points(source, "source")
        w = np.ones(len(s)) if weights is None else np.asarray(weights, dtype=np.float64)
        total = w.sum()
        if not total > 0:
            raise ParameterError("weights must have a positive sum")
        return cls(s, target, w / total)


def policy_weights(queries, gripper, beta=DEFAULT_BETA) -> np.ndarray:
    """Weights proportional to ``1 / (distance to gripper + beta)``, summing to 1."""
    if not beta > 0:
        raise ParameterError("beta must be positive")
    q = as_points(queries, "queries")
    d = np.linalg.norm(q - as_point(gripper, "gripper"), axis=1)
    inv = 1.0 / (d + beta)
    return inv / inv.sum()


def weighted_svd_align(c: WeightedCorrespondences) -> SE3Transform:
    """Rigid transform minimizing ``sum_i w_i |target_i - (R source_i + T)|^2``.

    Weighted Kabsch with a determinant guard against reflections.

    Raises
    ------
    DegenerateInputError
        fewer than three correspondences.
    DegenerateGeometryError
        the weighted source spread has rank below 2; the error carries the
        weighted-centroid translation.
    """
    src, tgt, w = c.source, c.target, c.weights
    if len(src) < 3:
        raise DegenerateInputError(f"need at least 3 correspondences, got {len(src)}")
    mu_s = w @ src
    mu_t = w @ tgt
    A = src - mu_s
    B = tgt - mu_t
    spread = np.linalg.svd(np.sqrt(w)[:, None] * A, compute_uv=False)
    if spread[1] < COLLINEAR_TOL:
        raise DegenerateGeometryError("source points are collinear or coincident", mu_t - mu_s)
    H = (w[:, None] * A).T @ B
    U, _, Vt = np.linalg.svd(H)
    V = Vt.T
    d = 1.0 if np.linalg.det(V @ U.T) >= 0 else -1.0
    R = V @ np.diag([1.0, 1.0, d]) @ U.T
    return SE3Transform(R, mu_t - R @ mu_s)


def align(source, target, weights=None) -> SE3Transform:
    return weighted_svd_align(WeightedCorrespondences.normalized(source, target, weights))


def align_flow_steps(flow: GeneralFlow, weights, fallback=True):
    """One transform per adjacent timestep pair, in chronological order.

    With ``fallback`` a degenerate step becomes a translation-only transform;
    the second return value flags which steps fell back.
    """
    pos = flow.positions()
    steps, degenerate = [], []
    for t in range(flow.steps):
        try:
            steps.append(align(pos[:, t], pos[:, t + 1], weights))
            degenerate.append(False)
        except (DegenerateGeometryError, DegenerateInputError) as exc:
            if not fallback:
                raise
            w = np.asarray(weights, dtype=np.float64)
            w = w / w.sum()
            shift = getattr(exc, "translation", None)
            if shift is None:
                shift = w @ (pos[:, t + 1] - pos[:, t])
            steps.append(SE3Transform.from_translation(shift))
            degenerate.append(True)
    return steps, degenerate


def compose_chronological(steps) -> SE3Transform:
    total = SE3Transform.identity()
    for s in steps:
        total = s @ total
    return total
