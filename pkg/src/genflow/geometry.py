"""Point clouds, rigid transforms, the pinhole camera and sampling primitives.

All lengths are meters. Points are plain ``numpy`` arrays of shape ``(3,)``
or ``(N, 3)``; the containers below only add validation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInputError, InvalidDepthError, ParameterError

ORTHO_TOL = 1e-9


def as_points(p, name="points"):
    """Return ``p`` as a float64 ``(N, 3)`` array, checking it is finite."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ParameterError(f"{name} must have shape (N, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite values")
    return arr


def as_point(p, name="point"):
    arr = np.asarray(p, dtype=np.float64).reshape(-1)
    if arr.shape != (3,):
        raise ParameterError(f"{name} must have 3 components, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite values")
    return arr


def rotation_about_axis(axis, angle):
    """Rodrigues rotation matrix for a rotation of ``angle`` rad about ``axis``."""
    k = as_point(axis, "axis")
    n = np.linalg.norm(k)
    if n == 0.0:
        raise ParameterError("rotation axis must be nonzero")
    k = k / n
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rotation_angle(R):
    """Geodesic angle of a rotation matrix, in radians."""
    c = (np.trace(R) - 1.0) / 2.0
    s = np.linalg.norm([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / 2.0
    return float(np.arctan2(s, c))


def rotation_axis(R):
    """Unit rotation axis of ``R`` (undefined, returns zeros, for the identity)."""
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    n = np.linalg.norm(v)
    if n < 1e-15:
        # angle 0 or pi; for pi the axis is the dominant eigenvector
        if rotation_angle(R) < 1e-12:
            return np.zeros(3)
        w, V = np.linalg.eigh((R + R.T) / 2.0)
        return V[:, np.argmax(w)]
    return v / n


@dataclass(frozen=True, eq=False)
class SE3Transform:
    """Rigid transform ``x -> rotation @ x + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = as_point(self.translation, "translation")
        if not np.all(np.isfinite(R)):
            raise ParameterError("rotation contains non-finite values")
        if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHO_TOL:
            raise ParameterError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise ParameterError("rotation determinant is not +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_translation(cls, t):
        return cls(np.eye(3), t)

    @classmethod
    def from_axis_angle(cls, axis, angle, about=None):
        """Rotation about a line through ``about`` (origin by default)."""
        R = rotation_about_axis(axis, angle)
        if about is None:
            return cls(R, np.zeros(3))
        o = as_point(about, "about")
        return cls(R, o - R @ o)

    @classmethod
    def from_matrix(cls, M):
        M = np.asarray(M, dtype=np.float64)
        return cls(M[:3, :3], M[:3, 3])

    def as_matrix(self):
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def apply(self, p):
        return se3_apply(self, p)

    def compose(self, other: "SE3Transform") -> "SE3Transform":
        """``self ∘ other``: apply ``other`` first."""
        R = _reorthonormalize(self.rotation @ other.rotation)
        return SE3Transform(R, self.rotation @ other.translation + self.translation)

    def __matmul__(self, other):
        return self.compose(other)

    def inverse(self) -> "SE3Transform":
        Rt = self.rotation.T
        return SE3Transform(Rt, -Rt @ self.translation)

    def to_json(self):
        return {
            "rotation": [float(v) for v in self.rotation.reshape(-1)],
            "translation": [float(v) for v in self.translation],
        }

    @classmethod
    def from_json(cls, d):
        return cls(np.asarray(d["rotation"], dtype=np.float64).reshape(3, 3), d["translation"])

    def __repr__(self):
        return (f"SE3Transform(angle={np.rad2deg(rotation_angle(self.rotation)):.4f}deg, "
                f"translation={np.array2string(self.translation, precision=5)})")


def _reorthonormalize(R):
    # keeps long composition chains inside the validation tolerance
    if np.max(np.abs(R.T @ R - np.eye(3))) < 1e-13:
        return R
    U, _, Vt = np.linalg.svd(R)
    return U @ Vt


def se3_apply(t: SE3Transform, p):
    """Apply a rigid transform to one point ``(3,)`` or many ``(N, 3)``."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.shape[-1] != 3:
        raise ParameterError(f"points must have a trailing dimension of 3, got {arr.shape}")
    return arr @ t.rotation.T + t.translation


@dataclass(frozen=True, eq=False)
class PointCloud:
    positions: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.size == 0:
            pos = pos.reshape(0, 3)
        pos = as_points(pos, "positions") if len(pos) else pos
        col = None
        if self.colors is not None:
            col = np.asarray(self.colors, dtype=np.float64)
            if col.size == 0:
                col = col.reshape(0, 3)
            if col.shape != pos.shape:
                raise ParameterError("colors must match positions in length")
            if np.any(col < 0.0) or np.any(col > 1.0):
                raise ParameterError("colors must lie in [0, 1]")
            col.setflags(write=False)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "colors", col)

    def __len__(self):
        return len(self.positions)

    def select(self, indices):
        idx = np.asarray(indices, dtype=np.intp)
        return PointCloud(self.positions[idx], None if self.colors is None else self.colors[idx])

    def transformed(self, t: SE3Transform):
        return PointCloud(se3_apply(t, self.positions), self.colors)

    @staticmethod
    def concatenate(clouds):
        clouds = list(clouds)
        if not clouds:
            return PointCloud(np.zeros((0, 3)))
        pos = np.concatenate([c.positions for c in clouds])
        if all(c.colors is not None for c in clouds):
            return PointCloud(pos, np.concatenate([c.colors for c in clouds]))
        return PointCloud(pos)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus a camera-to-world extrinsic."""

    fx: float
    fy: float
    cx: float
    cy: float
    extrinsic: SE3Transform = field(default_factory=SE3Transform.identity)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ParameterError("focal lengths must be positive")


def back_project(pixel, depth, cam: CameraModel):
    """World-frame point seen at ``pixel`` (u, v) with metric ``depth``."""
    if not depth > 0:
        raise InvalidDepthError(f"depth must be positive, got {depth}")
    u, v = pixel
    p_cam = np.array([(u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth])
    return se3_apply(cam.extrinsic, p_cam)


def project(point, cam: CameraModel):
    """Forward pinhole projection; returns ``(u, v, depth)``."""
    p_cam = se3_apply(cam.extrinsic.inverse(), as_point(point))
    z = p_cam[2]
    if not z > 0:
        raise InvalidDepthError("point is behind the camera")
    return cam.fx * p_cam[0] / z + cam.cx, cam.fy * p_cam[1] / z + cam.cy, z


def camera_depths(points, cam: CameraModel):
    """Camera-frame depth of each world point."""
    return se3_apply(cam.extrinsic.inverse(), as_points(points))[:, 2]


def voxel_downsample(cloud: PointCloud, voxel: float) -> PointCloud:
    """Replace every occupied voxel cell by the centroid of its points.

    Cells are ``floor(x / voxel)`` on each axis. Output points are ordered by
    cell index (lexicographic), which makes the result deterministic.
    """
    if not voxel > 0:
        raise ParameterError(f"voxel size must be positive, got {voxel}")
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.positions / voxel).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    n = len(counts)
    pos = np.zeros((n, 3))
    np.add.at(pos, inverse, cloud.positions)
    pos /= counts[:, None]
    col = None
    if cloud.colors is not None:
        col = np.zeros((n, 3))
        np.add.at(col, inverse, cloud.colors)
        col = np.clip(col / counts[:, None], 0.0, 1.0)
    return PointCloud(pos, col)


def farthest_point_sample(cloud, n: int, seed: int = 0) -> np.ndarray:
    """Greedy farthest point sampling.

    The first index is drawn from ``numpy.random.default_rng(seed)``; every
    later pick maximizes the distance to the already selected set, lowest index
    winning ties. Returns ``min(n, len(cloud))`` distinct indices.
    """
    pts = cloud.positions if isinstance(cloud, PointCloud) else as_points(cloud)
    N = len(pts)
    if N == 0:
        raise EmptyInputError("cannot sample from an empty cloud")
    if n < 1:
        raise ParameterError("n must be at least 1")
    m = min(n, N)
    rng = np.random.default_rng(seed)
    selected = np.empty(m, dtype=np.intp)
    selected[0] = rng.integers(N)
    dist = np.sum((pts - pts[selected[0]]) ** 2, axis=1)
    for k in range(1, m):
        nxt = int(np.argmax(dist))
        selected[k] = nxt
        np.minimum(dist, np.sum((pts - pts[nxt]) ** 2, axis=1), out=dist)
    return selected


def crop_cube(cloud: PointCloud, center, side: float) -> PointCloud:
    """Keep points whose every coordinate is within ``side / 2`` of ``center``."""
    if not side > 0:
        raise ParameterError("side must be positive")
    c = as_point(center, "center")
    if len(cloud) == 0:
        return cloud
    keep = np.all(np.abs(cloud.positions - c) <= side / 2.0, axis=1)
    return cloud.select(np.flatnonzero(keep))


# -- serialization -----------------------------------------------------------

def write_ply(cloud: PointCloud, path):
    """Write an ASCII PLY. Floats use the shortest round-trip repr."""
    lines = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}",
             "property double x", "property double y", "property double z"]
    if cloud.colors is not None:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines.append("end_header")
    rgb = None
    if cloud.colors is not None:
        rgb = np.rint(cloud.colors * 255.0).astype(np.int64)
    for i, p in enumerate(cloud.positions):
        row = [repr(float(v)) for v in p]
        if rgb is not None:
            row += [str(int(c)) for c in rgb[i]]
        lines.append(" ".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path) -> PointCloud:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != "ply":
        raise ParameterError(f"{path}: not a PLY file")
    n_vertex, props, i = None, [], 1
    in_vertex = False
    while i < len(text):
        tok = text[i].split()
        i += 1
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise ParameterError(f"{path}: only ASCII PLY is supported")
        if tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                n_vertex = int(tok[2])
        elif tok[0] == "property" and in_vertex:
            props.append(tok[-1])
        elif tok[0] == "end_header":
            break
    if n_vertex is None:
        raise ParameterError(f"{path}: no vertex element")
    rows = [r.split() for r in text[i:i + n_vertex]]
    if len(rows) != n_vertex or any(len(r) < len(props) for r in rows):
        raise ParameterError(f"{path}: truncated vertex data")
    col = {name: k for k, name in enumerate(props)}
    try:
        pos = np.array([[float(r[col["x"]]), float(r[col["y"]]), float(r[col["z"]])] for r in rows])
    except KeyError as exc:
        raise ParameterError(f"{path}: missing coordinate property {exc}") from None
    colors = None
    if all(c in col for c in ("red", "green", "blue")):
        colors = np.array([[int(r[col[c]]) for c in ("red", "green", "blue")] for r in rows]) / 255.0
    return PointCloud(pos.reshape(-1, 3), None if colors is None else colors.reshape(-1, 3))


def cloud_to_json(cloud: PointCloud):
    """Array-of-arrays form: ``[x, y, z]`` or ``[x, y, z, r, g, b]`` rows."""
    if cloud.colors is None:
        return cloud.positions.tolist()
    return np.hstack([cloud.positions, cloud.colors]).tolist()


def cloud_from_json(rows) -> PointCloud:
    arr = np.asarray(rows, dtype=np.float64)
    if arr.size == 0:
        return PointCloud(np.zeros((0, 3)))
    if arr.ndim != 2 or arr.shape[1] not in (3, 6):
        raise ParameterError("point rows must have 3 or 6 values")
    if arr.shape[1] == 6:
        return PointCloud(arr[:, :3], arr[:, 3:])
    return PointCloud(arr)


def save_cloud_json(cloud, path):
    Path(path).write_text(json.dumps(cloud_to_json(cloud)))


def load_cloud_json(path):
    return cloud_from_json(json.loads(Path(path).read_text()))
