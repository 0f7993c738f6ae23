"""Training loss terms and displacement metrics for general flow.

These are reference implementations for checking predictors and datasets;
nothing here is differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyInputError, ParameterError, ShapeMismatchError
from .flow import GeneralFlow

DEFAULT_SAMPLES = 10


@dataclass(frozen=True)
class LossWeights:
    beta1: float = 25.0
    beta2: float = 1.0
    beta3: float = 1.0

    def __post_init__(self):
        if min(self.beta1, self.beta2, self.beta3) < 0:
            raise ParameterError("loss weights must be nonnegative")


@dataclass(frozen=True, eq=False)
class GaussianParams:
    mu: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        lv = np.atleast_1d(np.asarray(self.log_var, dtype=np.float64))
        if mu.shape != lv.shape:
            raise ShapeMismatchError("mu and log_var must have equal lengths")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(lv))):
            raise ParameterError("Gaussian parameters must be finite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "log_var", lv)


def _pair(a, b, attr):
    a = getattr(a, attr, a)
    b = getattr(b, attr, b)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def loss_traj(pred, target) -> float:
    """Squared error of unit deltas, summed over steps and averaged over queries."""
    a, b = _pair(pred, target, "unit_deltas")
    if a.ndim != 3:
        raise ShapeMismatchError("unit deltas must have shape (Nq, T, 3)")
    return float(np.sum((a - b) ** 2) / a.shape[0])


def loss_scale(pred_scales, target_scales) -> float:
    """Mean squared scale error over queries (no sum over steps)."""
    a, b = _pair(pred_scales, target_scales, "scales")
    if a.ndim == 0 or a.shape[0] == 0:
        raise ShapeMismatchError("scales must be a non-empty vector")
    return float(np.sum((a - b) ** 2) / a.shape[0])


def kl_divergence(g: GaussianParams) -> float:
    """KL(N(mu, exp(log_var)) || N(0, I)) in closed form."""
    return float(-0.5 * np.sum(1.0 + g.log_var - g.mu ** 2 - np.exp(g.log_var)))


def loss_acc(pred_flow, target_flow) -> float:
    """Squared error of accumulated absolute positions, averaged over queries."""
    a, b = _pair(pred_flow, target_flow, "trajectories")
    return float(np.sum((a - b) ** 2) / a.shape[0])


def total_loss(components, w: LossWeights = LossWeights()) -> float:
    """Weighted sum ``traj + b1*scale + b2*kl + b3*acc``.

    ``components`` is a mapping with keys ``traj, scale, kl, acc`` or a
    4-sequence in that order.
    """
    if isinstance(components, Mapping):
        traj, scale, kl, acc = (components[k] for k in ("traj", "scale", "kl", "acc"))
    else:
        traj, scale, kl, acc = components
    vals = np.array([traj, scale, kl, acc], dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        raise ParameterError("loss components must be finite")
    return float(vals[0] + w.beta1 * vals[1] + w.beta2 * vals[2] + w.beta3 * vals[3])


def _errors(pred: GeneralFlow, target: GeneralFlow):
    a, b = _pair(pred, target, "trajectories")
    if a.ndim != 3:
        raise ShapeMismatchError("flows must have shape (Nq, T, 3)")
    return np.linalg.norm(a - b, axis=2)


def ade(pred: GeneralFlow, target: GeneralFlow) -> float:
    """Average displacement error in centimeters."""
    return float(100.0 * _errors(pred, target).mean())


def fde(pred: GeneralFlow, target: GeneralFlow) -> float:
    """Final-step displacement error in centimeters."""
    return float(100.0 * _errors(pred, target)[:, -1].mean())


def metrics_over_samples(samples: Sequence[GeneralFlow], target: GeneralFlow):
    """Mean ADE and FDE over K sampled predictions."""
    samples = list(samples)
    if not samples:
        raise EmptyInputError("need at least one predicted sample")
    a = np.mean([ade(s, target) for s in samples])
    f = np.mean([fde(s, target) for s in samples])
    return float(a), float(f)


def metrics_report(samples, target):
    samples = [samples] if isinstance(samples, GeneralFlow) else list(samples)
    a, f = metrics_over_samples(samples, target)
    return {"ade_cm": a, "fde_cm": f, "n_queries": target.n_queries, "n_samples": len(samples)}

