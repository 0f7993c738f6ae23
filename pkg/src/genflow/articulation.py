"""Articulated objects, joint models and pose tracks.

Part clouds are stored in the object frame at joint value zero. A part's world
pose is ``base_pose ∘ joint_transform(value)``.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ConfigurationError, LookupFailure, ParameterError, RangeError
from .geometry import PointCloud, SE3Transform, as_point, cloud_from_json, read_ply, se3_apply

JOINT_KINDS = ("revolute", "prismatic", "fixed", "free")
TIME_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class JointModel:
    kind: str = "fixed"
    axis_origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    axis_direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    limits: tuple = (0.0, 0.0)
    value: float = 0.0
    # current pose relative to the object frame; used by free joints only
    pose: SE3Transform = field(default_factory=SE3Transform.identity)

    def __post_init__(self):
        if self.kind not in JOINT_KINDS:
            raise ParameterError(f"unknown joint kind {self.kind!r}")
        o = as_point(self.axis_origin, "axis_origin")
        d = as_point(self.axis_direction, "axis_direction")
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ParameterError("axis_direction must be a unit vector")
        lo, hi = (float(v) for v in self.limits)
        if lo > hi:
            raise ParameterError("joint limits must satisfy min <= max")
        v = float(self.value)
        if self.kind in ("revolute", "prismatic") and not (lo - 1e-12 <= v <= hi + 1e-12):
            raise ParameterError(f"joint value {v} outside limits [{lo}, {hi}]")
        object.__setattr__(self, "axis_origin", o)
        object.__setattr__(self, "axis_direction", d)
        object.__setattr__(self, "limits", (lo, hi))
        object.__setattr__(self, "value", min(max(v, lo), hi) if self.is_actuated else v)

    @property
    def is_actuated(self):
        return self.kind in ("revolute", "prismatic")

    def clamp(self, value):
        lo, hi = self.limits
        return float(min(max(value, lo), hi))

    def transform(self, value=None) -> SE3Transform:
        """Part motion in the object frame at joint coordinate ``value``."""
        q = self.value if value is None else float(value)
        if self.kind == "revolute":
            return SE3Transform.from_axis_angle(self.axis_direction, q, about=self.axis_origin)
        if self.kind == "prismatic":
            return SE3Transform.from_translation(q * self.axis_direction)
        if self.kind == "free":
            return self.pose
        return SE3Transform.identity()

    def with_value(self, value):
        return replace(self, value=self.clamp(value))

    def to_json(self):
        d = {"kind": self.kind}
        if self.is_actuated:
            d.update(axis_direction=self.axis_direction.tolist(), limits=list(self.limits), value=self.value)
            if self.kind == "revolute":
                d["axis_origin"] = self.axis_origin.tolist()
        if self.kind == "free":
            d["pose"] = self.pose.to_json()
        return d

    @classmethod
    def from_json(cls, d):
        kw = {"kind": d.get("kind", "fixed")}
        for key in ("axis_origin", "axis_direction"):
            if key in d:
                kw[key] = d[key]
        if "axis_direction" in kw:
            a = np.asarray(kw["axis_direction"], dtype=np.float64)
            kw["axis_direction"] = a / np.linalg.norm(a)
        if "limits" in d:
            kw["limits"] = tuple(d["limits"])
        if "value" in d:
            kw["value"] = d["value"]
        if "pose" in d:
            kw["pose"] = SE3Transform.from_json(d["pose"])
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class ArticulatedObject:
    parts: dict
    part_joint: dict
    base_pose: SE3Transform = field(default_factory=SE3Transform.identity)
    name: str = "object"

    def __post_init__(self):
        missing = set(self.parts) - set(self.part_joint)
        if missing:
            raise ParameterError(f"parts without a joint entry: {sorted(missing)}")
        extra = set(self.part_joint) - set(self.parts)
        if extra:
            raise ParameterError(f"joints for unknown parts: {sorted(extra)}")

    def _joint(self, part):
        try:
            return self.part_joint[part]
        except KeyError:
            raise LookupFailure(f"object {self.name!r} has no part {part!r}") from None

    def joint(self, part) -> JointModel:
        return self._joint(part)

    def part_pose(self, part, value=None) -> SE3Transform:
        return self.base_pose @ self._joint(part).transform(value)

    def posed_part(self, part, value=None) -> PointCloud:
        self._joint(part)
        return self.parts[part].transformed(self.part_pose(part, value))

    def posed_cloud(self):
        """All parts in the world frame plus a per-point part-name array."""
        clouds, labels = [], []
        for name in self.parts:
            c = self.posed_part(name)
            clouds.append(c)
            labels += [name] * len(c)
        return PointCloud.concatenate(clouds), np.array(labels, dtype=object)

    def with_joint_value(self, part, value):
        joints = dict(self.part_joint)
        joints[part] = self._joint(part).with_value(value)
        return replace(self, part_joint=joints)

    def with_free_pose(self, part, pose: SE3Transform):
        joints = dict(self.part_joint)
        joints[part] = replace(self._joint(part), pose=pose)
        return replace(self, part_joint=joints)

    def axis_world(self, part):
        """World-frame (origin, direction) of an actuated joint's axis."""
        j = self._joint(part)
        return se3_apply(self.base_pose, j.axis_origin), self.base_pose.rotation @ j.axis_direction


# -- pose tracks -------------------------------------------------------------

def interpolate_pose(a: SE3Transform, b: SE3Transform, alpha: float) -> SE3Transform:
    """Shortest-arc rotation interpolation with linear translation."""
    if alpha <= 0.0:
        return a
    if alpha >= 1.0:
        return b
    rel = Rotation.from_matrix(a.rotation.T @ b.rotation).as_rotvec()
    R = a.rotation @ Rotation.from_rotvec(alpha * rel).as_matrix()
    return SE3Transform(R, (1.0 - alpha) * a.translation + alpha * b.translation)


@dataclass(frozen=True, eq=False)
class PoseTrack:
    """World poses of every part at strictly increasing timestamps."""

    timestamps: np.ndarray
    poses: tuple

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64).reshape(-1)
        poses = tuple(dict(p) for p in self.poses)
        if len(ts) == 0 or len(ts) != len(poses):
            raise ParameterError("a track needs one pose map per timestamp")
        if np.any(np.diff(ts) <= 0):
            raise ParameterError("track timestamps must be strictly increasing")
        parts = set(poses[0])
        if any(set(p) != parts for p in poses):
            raise ParameterError("every timestamp must cover every part")
        ts.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "poses", poses)

    @property
    def parts(self):
        return tuple(self.poses[0])

    @property
    def start(self):
        return float(self.timestamps[0])

    @property
    def end(self):
        return float(self.timestamps[-1])

    def covers(self, t0, t1):
        return t0 >= self.start - TIME_TOL and t1 <= self.end + TIME_TOL

    def pose_at(self, part, t) -> SE3Transform:
        if part not in self.poses[0]:
            raise LookupFailure(f"track has no part {part!r}")
        ts = self.timestamps
        if t < ts[0] - TIME_TOL or t > ts[-1] + TIME_TOL:
            raise RangeError(f"time {t} outside track range [{ts[0]}, {ts[-1]}]")
        i = bisect_right(ts, t) - 1
        i = min(max(i, 0), len(ts) - 1)
        if abs(t - ts[i]) <= 1e-12 or i == len(ts) - 1:
            return self.poses[i][part]
        if abs(ts[i + 1] - t) <= 1e-12:
            return self.poses[i + 1][part]
        alpha = (t - ts[i]) / (ts[i + 1] - ts[i])
        return interpolate_pose(self.poses[i][part], self.poses[i + 1][part], alpha)

    @classmethod
    def from_joint_keyframes(cls, obj: ArticulatedObject, times, values: dict):
        """Track obtained by driving actuated joints through keyframe values.

        ``values`` maps a part name to one joint value per timestamp; parts not
        listed stay at their current value.
        """
        times = np.asarray(times, dtype=np.float64)
        poses = []
        for k in range(len(times)):
            frame = {}
            for part in obj.parts:
                v = values[part][k] if part in values else None
                frame[part] = obj.part_pose(part, v)
            poses.append(frame)
        return cls(times, poses)


# -- scene documents ---------------------------------------------------------

def _load_part(spec, base_dir):
    if isinstance(spec, list):
        return cloud_from_json(spec)
    if "points" in spec:
        cloud = cloud_from_json(spec["points"])
        if "colors" in spec:
            cloud = PointCloud(cloud.positions, spec["colors"])
        return cloud
    if "ply" in spec:
        path = Path(base_dir) / spec["ply"]
        if not path.exists():
            raise ConfigurationError(f"part cloud file not found: {path}")
        return read_ply(path)
    raise ConfigurationError("part must give inline 'points' or a 'ply' reference")


def object_from_json(d, base_dir=".") -> ArticulatedObject:
    try:
        parts = {name: _load_part(p, base_dir) for name, p in d["parts"].items()}
        joints = {name: JointModel.from_json(j) for name, j in d.get("joints", {}).items()}
    except KeyError as exc:
        raise ConfigurationError(f"object is missing field {exc}") from None
    for name in parts:
        joints.setdefault(name, JointModel("fixed"))
    base = SE3Transform.from_json(d["base_pose"]) if "base_pose" in d else SE3Transform.identity()
    return ArticulatedObject(parts, joints, base, d.get("id", "object"))


def object_to_json(obj: ArticulatedObject):
    parts = {}
    for name, cloud in obj.parts.items():
        entry = {"points": cloud.positions.tolist()}
        if cloud.colors is not None:
            entry["colors"] = cloud.colors.tolist()
        parts[name] = entry
    return {
        "id": obj.name,
        "base_pose": obj.base_pose.to_json(),
        "parts": parts,
        "joints": {name: j.to_json() for name, j in obj.part_joint.items()},
    }


def track_from_json(d, obj: ArticulatedObject) -> PoseTrack:
    """Keyframes give either joint values (``joints``) or part poses (``poses``)."""
    frames = d["keyframes"]
    times = [float(f["t"]) for f in frames]
    poses = []
    for f in frames:
        frame = {}
        for part in obj.parts:
            if "poses" in f and part in f["poses"]:
                frame[part] = SE3Transform.from_json(f["poses"][part])
            else:
                v = f.get("joints", {}).get(part)
                frame[part] = obj.part_pose(part, v)
        poses.append(frame)
    return PoseTrack(times, poses)


def load_scene(path_or_doc, base_dir=None):
    """Load ``[(object, track or None), ...]`` from a scene JSON document."""
    if isinstance(path_or_doc, (str, Path)):
        path = Path(path_or_doc)
        if not path.exists():
            raise ConfigurationError(f"scene file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        base_dir = path.parent if base_dir is None else base_dir
    else:
        doc = path_or_doc
    base_dir = base_dir or "."
    out = []
    for entry in doc.get("objects", []):
        obj = object_from_json(entry, base_dir)
        track = track_from_json(entry["track"], obj) if "track" in entry else None
        out.append((obj, track))
    return out
