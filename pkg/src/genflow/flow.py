"""General flow: future trajectories of query points, and scale normalization.

A :class:`GeneralFlow` stores absolute positions ``F_1 .. F_T`` for each of
``Nq`` query points; ``F_0`` is the query itself and is held in ``queries``.
Networks predict per-step displacements instead, which are normalized by a
per-query scale so that long and short trajectories train on the same range.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError, ShapeMismatchError

DEGENERATE_SCALE = 1e-9
DEFAULT_STEPS = 3
DEFAULT_TIMESTEP = 0.5

BINARY_MAGIC = b"GFLW"
BINARY_VERSION = 1
_HEADER = struct.Struct("<4sBII")


class NormMode(str, enum.Enum):
    """Scale normalization variants.

    TLN divides by the total path length, TDN by the net displacement and SDN
    makes each step unit length.
    """

    TLN = "TLN"
    TDN = "TDN"
    SDN = "SDN"


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _check_queries(q):
    if q.ndim != 2 or q.shape[1] != 3 or len(q) < 1:
        raise ParameterError(f"queries must have shape (Nq>=1, 3), got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ParameterError("queries contain non-finite values")


def _check_steps(a, nq, name):
    if a.ndim != 3 or a.shape[0] != nq or a.shape[2] != 3 or a.shape[1] < 1:
        raise ShapeMismatchError(f"{name} must have shape ({nq}, T>=1, 3), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ParameterError(f"{name} contain non-finite values")


@dataclass(frozen=True, eq=False)
class GeneralFlow:
    queries: np.ndarray
    trajectories: np.ndarray
    timestep: float = DEFAULT_TIMESTEP

    def __post_init__(self):
        q = _frozen(self.queries)
        f = _frozen(self.trajectories)
        _check_queries(q)
        _check_steps(f, len(q), "trajectories")
        object.__setattr__(self, "queries", q)
        object.__setattr__(self, "trajectories", f)
        object.__setattr__(self, "timestep", float(self.timestep))

    @property
    def n_queries(self):
        return self.trajectories.shape[0]

    @property
    def steps(self):
        return self.trajectories.shape[1]

    def positions(self):
        """``(Nq, T + 1, 3)`` array including the start positions."""
        return np.concatenate([self.queries[:, None, :], self.trajectories], axis=1)

    @classmethod
    def static(cls, queries, steps=DEFAULT_STEPS, timestep=DEFAULT_TIMESTEP):
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        return cls(q, np.repeat(q[:, None, :], steps, axis=1), timestep)


@dataclass(frozen=True, eq=False)
class DeltaFlow:
    queries: np.ndarray
    deltas: np.ndarray
    timestep: float = DEFAULT_TIMESTEP

    def __post_init__(self):
        q = _frozen(self.queries)
        d = _frozen(self.deltas)
        _check_queries(q)
        _check_steps(d, len(q), "deltas")
        object.__setattr__(self, "queries", q)
        object.__setattr__(self, "deltas", d)
        object.__setattr__(self, "timestep", float(self.timestep))

    def step_lengths(self):
        return np.linalg.norm(self.deltas, axis=2)

    def total_lengths(self):
        """Per-query path length ``L^i``."""
        return self.step_lengths().sum(axis=1)


@dataclass(frozen=True, eq=False)
class NormalizedFlow:
    """Per-query scales plus dimensionless unit deltas.

    ``scales`` has shape ``(Nq,)`` for TLN/TDN and ``(Nq, T)`` for SDN.
    """

    scales: np.ndarray
    unit_deltas: np.ndarray
    mode: NormMode
    queries: np.ndarray | None = None
    timestep: float = DEFAULT_TIMESTEP

    def __post_init__(self):
        mode = NormMode(self.mode)
        u = _frozen(self.unit_deltas)
        s = _frozen(self.scales)
        if u.ndim != 3 or u.shape[2] != 3:
            raise ShapeMismatchError(f"unit_deltas must have shape (Nq, T, 3), got {u.shape}")
        want = u.shape[:2] if mode is NormMode.SDN else u.shape[:1]
        if s.shape != want:
            raise ShapeMismatchError(f"{mode.value} scales must have shape {want}, got {s.shape}")
        if np.any(s < 0):
            raise ParameterError("scales must be nonnegative")
        q = None
        if self.queries is not None:
            q = _frozen(self.queries)
            _check_queries(q)
            if len(q) != len(u):
                raise ShapeMismatchError("queries and unit_deltas disagree on Nq")
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "scales", s)
        object.__setattr__(self, "unit_deltas", u)
        object.__setattr__(self, "queries", q)


def compute_deltas(flow: GeneralFlow) -> DeltaFlow:
    return DeltaFlow(flow.queries, np.diff(flow.positions(), axis=1), flow.timestep)


def accumulate(queries, deltas, timestep=DEFAULT_TIMESTEP) -> GeneralFlow:
    """Running sum of per-step deltas starting at the queries.

    ``deltas`` may be a :class:`DeltaFlow` (its queries are ignored in favour
    of ``queries``) or a raw ``(Nq, T, 3)`` array.
    """
    if isinstance(deltas, DeltaFlow):
        timestep = deltas.timestep
        deltas = deltas.deltas
    q = np.asarray(queries, dtype=np.float64)
    d = np.asarray(deltas, dtype=np.float64)
    if q.ndim != 2 or d.ndim != 3 or d.shape[0] != q.shape[0] or d.shape[2] != 3 or q.shape[1] != 3:
        raise ShapeMismatchError(f"queries {q.shape} and deltas {d.shape} do not agree")
    return GeneralFlow(q, q[:, None, :] + np.cumsum(d, axis=1), timestep)


def _safe_divide(d, scale):
    ok = scale >= DEGENERATE_SCALE
    s = np.where(ok, scale, 0.0)
    safe = np.where(ok, scale, 1.0)
    return s, np.where(ok[..., None], d / safe[..., None], 0.0)


def normalize(deltas: DeltaFlow, mode=NormMode.TLN) -> NormalizedFlow:
    """Split deltas into a scale and unit-scale shape.

    Divisors below ``1e-9`` m are treated as degenerate: the scale is set to
    zero and the unit deltas to zero.
    """
    mode = NormMode(mode)
    d = deltas.deltas
    if mode is NormMode.TLN:
        scale = np.linalg.norm(d, axis=2).sum(axis=1)
    elif mode is NormMode.TDN:
        scale = np.linalg.norm(d.sum(axis=1), axis=1)
    else:
        scale = np.linalg.norm(d, axis=2)
    if mode is NormMode.SDN:
        s, u = _safe_divide(d, scale)
    else:
        s, u = _safe_divide(d, np.broadcast_to(scale[:, None], d.shape[:2]))
        s = s[:, 0]
    return NormalizedFlow(s, u, mode, deltas.queries, deltas.timestep)


def denormalize(nf: NormalizedFlow) -> DeltaFlow:
    u = nf.unit_deltas
    if nf.mode is NormMode.SDN:
        d = u * nf.scales[..., None]
    else:
        d = u * nf.scales[:, None, None]
    q = nf.queries if nf.queries is not None else np.zeros((len(u), 3))
    return DeltaFlow(q, d, nf.timestep)


# -- serialization -----------------------------------------------------------

def flow_to_json(flow: GeneralFlow):
    return {
        "queries": flow.queries.tolist(),
        "timestep": flow.timestep,
        "trajectories": flow.trajectories.tolist(),
    }


def flow_from_json(d) -> GeneralFlow:
    try:
        return GeneralFlow(np.asarray(d["queries"], dtype=np.float64),
                           np.asarray(d["trajectories"], dtype=np.float64),
                           float(d.get("timestep", DEFAULT_TIMESTEP)))
    except KeyError as exc:
        raise ParameterError(f"flow record is missing field {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ShapeMismatchError(f"malformed flow record: {exc}") from None


def flow_to_bytes(flow: GeneralFlow) -> bytes:
    """Little-endian block: magic, version, Nq, T, then float64 payload.

    The payload is ``timestep``, the ``Nq * 3`` query coordinates and the
    ``Nq * T * 3`` trajectory coordinates, all C order.
    """
    header = _HEADER.pack(BINARY_MAGIC, BINARY_VERSION, flow.n_queries, flow.steps)
    payload = np.concatenate([[flow.timestep], flow.queries.reshape(-1), flow.trajectories.reshape(-1)])
    return header + payload.astype("<f8").tobytes()


def flow_from_bytes(buf: bytes) -> GeneralFlow:
    if len(buf) < _HEADER.size:
        raise ShapeMismatchError("flow block is shorter than its header")
    magic, version, nq, T = _HEADER.unpack_from(buf)
    if magic != BINARY_MAGIC:
        raise ParameterError("not a GFLW block")
    if version != BINARY_VERSION:
        raise ParameterError(f"unsupported GFLW version {version}")
    n = 1 + nq * 3 + nq * T * 3
    body = buf[_HEADER.size:]
    if len(body) != 8 * n:
        raise ShapeMismatchError(f"GFLW payload has {len(body)} bytes, expected {8 * n}")
    data = np.frombuffer(body, dtype="<f8").astype(np.float64)
    q = data[1:1 + nq * 3].reshape(nq, 3)
    f = data[1 + nq * 3:].reshape(nq, T, 3)
    return GeneralFlow(q, f, float(data[0]))


def save_flow(flow: GeneralFlow, path):
    """Write ``.json`` as a JSON record, anything else as a GFLW block."""
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(flow_to_json(flow), sort_keys=True))
    else:
        path.write_bytes(flow_to_bytes(flow))


def load_flow(path) -> GeneralFlow:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == BINARY_MAGIC:
        return flow_from_bytes(raw)
    try:
        doc = json.loads(raw.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ShapeMismatchError(f"{path}: unreadable flow file ({exc})") from None
    return flow_from_json(doc)
