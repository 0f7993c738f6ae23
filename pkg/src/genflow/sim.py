"""Kinematic manipulation world and the closed-loop flow-following policy.

Each policy step renders the scene, takes the points within a radius of the
gripper as queries, asks a predictor for their flow, fits one weighted rigid
transform per flow step and executes the composition. Execution is kinematic:
a gripper attached to an articulated part moves the joint by the projection of
the command onto the joint's single degree of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np

from .alignment import align_flow_steps, compose_chronological, policy_weights
from .articulation import ArticulatedObject, object_from_json, object_to_json
from .errors import (ConfigurationError, EmptySceneError, GenFlowError, LostContactError,
                     ParameterError, UnsupportedTaskError)
from .flow import DEFAULT_STEPS, GeneralFlow, accumulate, compute_deltas, load_flow
from .geometry import (CameraModel, PointCloud, SE3Transform, as_point, as_points, camera_depths,
                       crop_cube, farthest_point_sample, se3_apply)

TASK_VERBS = ("open", "close", "pickup", "putdown", "push", "fold")
SUPPORTED_VERBS = ("open", "close", "pickup", "putdown", "push")

DEFAULT_THRESHOLDS = {
    "revolute_open_deg": 80.0,
    "revolute_close_deg": 5.0,
    "prismatic_tol": 0.05,
    "displacement": 0.15,
    "upright_deg": 15.0,
    "table_tol": 0.01,
}


# -- world -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Attachment:
    object_id: str
    part: str
    grasp_local: np.ndarray  # grasp point in the part's rest frame

    def __post_init__(self):
        object.__setattr__(self, "grasp_local", as_point(self.grasp_local, "grasp_local"))


@dataclass(frozen=True, eq=False)
class Gripper:
    pose: SE3Transform = field(default_factory=SE3Transform.identity)
    closed: bool = True
    attachment: Attachment | None = None

    @property
    def position(self):
        return self.pose.translation


@dataclass(frozen=True, eq=False)
class World:
    objects: dict
    gripper: Gripper = field(default_factory=Gripper)
    table_height: float = 0.0

    def obj(self, object_id) -> ArticulatedObject:
        try:
            return self.objects[object_id]
        except KeyError:
            raise ConfigurationError(f"world has no object {object_id!r}") from None

    def grasp_point(self):
        """World position of the attached grasp point, or None."""
        a = self.gripper.attachment
        if a is None:
            return None
        return se3_apply(self.obj(a.object_id).part_pose(a.part), a.grasp_local)

    def with_object(self, object_id, obj):
        objects = dict(self.objects)
        objects[object_id] = obj
        return replace(self, objects=objects)

    def attach(self, object_id, part, position=None):
        """Close the gripper on ``part`` at ``position`` (the gripper's by default)."""
        obj = self.obj(object_id)
        p = self.gripper.position if position is None else as_point(position)
        local = se3_apply(obj.part_pose(part).inverse(), p)
        pose = SE3Transform(self.gripper.pose.rotation, p)
        return replace(self, gripper=Gripper(pose, True, Attachment(object_id, part, local)))


def world_from_json(doc, base_dir="."):
    if "builtin" in doc:
        from . import scenes
        return scenes.builtin_world(doc["builtin"], **doc.get("params", {}))
    objects = {}
    for entry in doc.get("objects", []):
        obj = object_from_json(entry, base_dir)
        objects[obj.name] = obj
    g = doc.get("gripper", {})
    if "pose" in g:
        pose = SE3Transform.from_json(g["pose"])
    else:
        pose = SE3Transform.from_translation(g.get("position", [0.0, 0.0, 0.0]))
    world = World(objects, Gripper(pose, bool(g.get("closed", True))), float(doc.get("table_height", 0.0)))
    if "attach" in g:
        world = world.attach(g["attach"]["object"], g["attach"]["part"])
    return world


def world_to_json(world: World):
    g = world.gripper
    doc = {
        "objects": [object_to_json(o) for o in world.objects.values()],
        "gripper": {"pose": g.pose.to_json(), "closed": g.closed},
        "table_height": world.table_height,
    }
    if g.attachment is not None:
        doc["gripper"]["attach"] = {"object": g.attachment.object_id, "part": g.attachment.part}
    return doc


# -- tasks -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Task:
    """A manipulation goal.

    For ``open``/``close`` on an actuated part, ``target`` is the goal joint
    value (defaults to the open or closed limit). For free parts it is the goal
    displacement of the part from ``origin``, its position at episode start.
    """

    verb: str
    object_id: str
    part: str
    target: object = None
    thresholds: dict = field(default_factory=dict)
    origin: np.ndarray | None = None

    def __post_init__(self):
        if self.verb not in TASK_VERBS:
            raise UnsupportedTaskError(f"unknown task verb {self.verb!r}")
        th = dict(DEFAULT_THRESHOLDS)
        unknown = set(self.thresholds) - set(th)
        if unknown:
            raise ConfigurationError(f"unknown thresholds: {sorted(unknown)}")
        th.update(self.thresholds)
        object.__setattr__(self, "thresholds", th)

    @property
    def instruction(self):
        return f"{self.verb} {self.object_id}"

    def to_json(self):
        d = {"verb": self.verb, "object": self.object_id, "part": self.part}
        if self.target is not None:
            d["target"] = np.asarray(self.target).tolist()
        return d

    @classmethod
    def from_json(cls, d, thresholds=None):
        try:
            return cls(d["verb"], d["object"], d["part"], d.get("target"), dict(thresholds or {}))
        except KeyError as exc:
            raise ConfigurationError(f"task is missing field {exc}") from None


def validate_task(world: World, task: Task):
    if task.verb not in SUPPORTED_VERBS:
        raise UnsupportedTaskError(f"task verb {task.verb!r} is not supported by the kinematic simulator")
    obj = world.obj(task.object_id)
    if task.part not in obj.parts:
        raise ConfigurationError(f"object {task.object_id!r} has no part {task.part!r}")
    kind = obj.joint(task.part).kind
    if task.verb in ("open", "close") and kind not in ("revolute", "prismatic"):
        raise ConfigurationError(f"{task.verb} needs a revolute or prismatic part, got {kind}")
    if task.verb in ("pickup", "push", "putdown") and kind != "free":
        raise ConfigurationError(f"{task.verb} needs a free part, got {kind}")


def _goal_joint(obj, task):
    j = obj.joint(task.part)
    if task.target is not None:
        return j.clamp(float(task.target))
    return j.limits[1] if task.verb == "open" else j.limits[0]


def _part_position(world, task):
    return world.obj(task.object_id).part_pose(task.part).translation


def with_origin(world: World, task: Task) -> Task:
    if task.origin is not None or task.verb not in ("pickup", "push", "putdown"):
        return task
    return replace(task, origin=np.array(_part_position(world, task)))


def evaluate_success(world: World, task: Task) -> bool:
    validate_task(world, task)
    th = task.thresholds
    obj = world.obj(task.object_id)
    j = obj.joint(task.part)
    lo, hi = j.limits
    if j.kind == "revolute":
        if task.verb == "open":
            return bool(j.value - lo >= np.deg2rad(th["revolute_open_deg"]) - 1e-12)
        return bool(j.value - lo <= np.deg2rad(th["revolute_close_deg"]) + 1e-12)
    if j.kind == "prismatic":
        end = hi if task.verb == "open" else lo
        return bool(abs(j.value - end) <= th["prismatic_tol"] + 1e-12)
    origin = task.origin if task.origin is not None else np.zeros(3)
    moved = _part_position(world, task) - origin
    if task.verb in ("pickup", "push"):
        direction = np.asarray(task.target, dtype=np.float64)
        direction = direction / np.linalg.norm(direction)
        return bool(moved @ direction > th["displacement"] + 1e-9)
    # putdown
    cloud = obj.posed_part(task.part)
    resting = abs(cloud.positions[:, 2].min() - world.table_height) <= th["table_tol"]
    up = obj.part_pose(task.part).rotation[:, 2]
    tilt = np.degrees(np.arccos(np.clip(up[2], -1.0, 1.0)))
    return bool(resting and tilt <= th["upright_deg"])


def task_progress(world: World, task: Task) -> float:
    """Joint value for articulated tasks, displacement along the goal otherwise."""
    obj = world.obj(task.object_id)
    j = obj.joint(task.part)
    if j.is_actuated:
        return float(j.value)
    origin = task.origin if task.origin is not None else np.zeros(3)
    moved = _part_position(world, task) - origin
    if task.target is None:
        return float(np.linalg.norm(moved))
    d = np.asarray(task.target, dtype=np.float64)
    return float(moved @ d / np.linalg.norm(d))


# -- perception --------------------------------------------------------------

def posed_scene(world: World):
    """Every object point in the world frame, with (object, part) labels."""
    clouds, labels = [], []
    for oid, obj in world.objects.items():
        cloud, parts = obj.posed_cloud()
        clouds.append(cloud)
        labels += [(oid, p) for p in parts]
    return PointCloud.concatenate(clouds), labels


def render_scene(world: World, camera: CameraModel | None = None, points_budget=2048, crop_side=0.8,
                 seed=0, center=None, dropout=0.0) -> PointCloud:
    """Synthetic observation of the current world.

    Points behind the camera are dropped, the rest cropped to a cube around
    ``center`` (the gripper by default), optionally thinned by random dropout
    and reduced to ``points_budget`` with farthest point sampling.
    """
    if points_budget < 1:
        raise ParameterError("points_budget must be at least 1")
    cloud, _ = posed_scene(world)
    if camera is not None and len(cloud):
        cloud = cloud.select(np.flatnonzero(camera_depths(cloud.positions, camera) > 0))
    c = world.gripper.position if center is None else center
    cloud = crop_cube(cloud, c, crop_side)
    rng = np.random.default_rng(seed)
    if dropout > 0 and len(cloud):
        cloud = cloud.select(np.flatnonzero(rng.random(len(cloud)) >= dropout))
    if len(cloud) == 0:
        raise EmptySceneError("no scene points are visible")
    if len(cloud) > points_budget:
        cloud = cloud.select(farthest_point_sample(cloud, points_budget, int(rng.integers(2**31))))
    return cloud


def select_query_points(scene: PointCloud, gripper, radius=0.10):
    """Scene points within ``radius`` of the gripper (inclusive)."""
    if not radius > 0:
        raise ParameterError("radius must be positive")
    pts = scene.positions if isinstance(scene, PointCloud) else as_points(scene)
    if len(pts) == 0:
        return np.zeros((0, 3))
    d = np.linalg.norm(pts - as_point(gripper, "gripper"), axis=1)
    return pts[d <= radius]


# -- predictors --------------------------------------------------------------

class FlowPredictor(Protocol):
    def predict(self, scene: PointCloud, queries: np.ndarray, instruction: str, seed: int) -> GeneralFlow:
        ...


def _label_queries(world, queries):
    cloud, labels = posed_scene(world)
    pts = cloud.positions
    idx = np.empty(len(queries), dtype=np.intp)
    for k in range(0, len(queries), 256):
        chunk = queries[k:k + 256]
        d = np.sum((chunk[:, None, :] - pts[None]) ** 2, axis=2)
        idx[k:k + 256] = np.argmin(d, axis=1)
    return [labels[i] for i in idx]


def oracle_predict(world: World, queries, task: Task, noise_sigma=0.0, seed=0, steps=DEFAULT_STEPS,
                   max_displacement=0.05) -> GeneralFlow:
    """Ground-truth kinematic flow toward the task goal.

    Queries are assigned to the nearest object point. Those on the task part
    move along the exact joint motion; each step advances the joint by at most
    the increment that moves the farthest query ``max_displacement``. All
    other queries stay put. Gaussian noise of ``noise_sigma`` is added to every
    delta.
    """
    validate_task(world, task)
    q = as_points(queries, "queries")
    obj = world.obj(task.object_id)
    j = obj.joint(task.part)
    labels = _label_queries(world, q)
    moving = np.array([lab == (task.object_id, task.part) for lab in labels], dtype=bool)
    traj = np.repeat(q[:, None, :], steps, axis=1)
    if np.any(moving):
        base0 = obj.part_pose(task.part)
        inv0 = base0.inverse()
        qm = q[moving]
        if j.is_actuated:
            values = _joint_schedule(obj, task, qm, steps, max_displacement)
            for t, v in enumerate(values):
                traj[moving, t] = se3_apply(obj.part_pose(task.part, v) @ inv0, qm)
        else:
            origin = task.origin if task.origin is not None else base0.translation
            goal = origin + np.asarray(task.target, dtype=np.float64)
            pos = base0.translation.copy()
            for t in range(steps):
                rem = goal - pos
                n = np.linalg.norm(rem)
                if n > max_displacement:
                    rem = rem * (max_displacement / n)
                pos = pos + rem
                traj[moving, t] = qm + (pos - base0.translation)
    deltas = np.diff(np.concatenate([q[:, None], traj], axis=1), axis=1)
    if noise_sigma > 0:
        deltas = deltas + np.random.default_rng(seed).normal(0.0, noise_sigma, size=deltas.shape)
    return accumulate(q, deltas)


def _joint_schedule(obj, task, qm, steps, max_displacement):
    j = obj.joint(task.part)
    goal = _goal_joint(obj, task)
    if j.kind == "prismatic":
        budget = max_displacement
    else:
        o, a = obj.axis_world(task.part)
        v = qm - o
        r = np.linalg.norm(v - np.outer(v @ a, a), axis=1).max()
        ratio = max_displacement / (2.0 * r) if r > 0 else np.inf
        budget = 2.0 * np.arcsin(ratio) if ratio < 1.0 else np.pi
    values, v = [], j.value
    for _ in range(steps):
        rem = goal - v
        v = j.clamp(v + np.sign(rem) * min(budget, abs(rem)))
        values.append(v)
    return values


class OracleFlowPredictor:
    """Predictor with privileged access to the world state.

    :func:`run_episode` calls :meth:`observe` before every prediction.
    """

    def __init__(self, task: Task, noise_sigma=0.0, steps=DEFAULT_STEPS, max_displacement=0.05):
        self.task = task
        self.noise_sigma = noise_sigma
        self.steps = steps
        self.max_displacement = max_displacement
        self.world = None

    def observe(self, world: World):
        self.world = world

    def predict(self, scene, queries, instruction, seed):
        if self.world is None:
            raise ConfigurationError("oracle predictor has not observed a world")
        return oracle_predict(self.world, queries, self.task, self.noise_sigma, seed, self.steps,
                              self.max_displacement)


class ReplayFlowPredictor:
    """Replays recorded flows, one per call, re-anchored on the new queries.

    When the query count differs from the recording, the recording's mean
    per-step delta is applied to every query.
    """

    def __init__(self, flows):
        self.flows = [flows] if isinstance(flows, GeneralFlow) else list(flows)
        if not self.flows:
            raise ConfigurationError("replay predictor needs at least one flow")
        self.calls = 0

    @classmethod
    def from_file(cls, path):
        return cls(load_flow(path))

    def reset(self):
        self.calls = 0

    def predict(self, scene, queries, instruction, seed):
        rec = self.flows[min(self.calls, len(self.flows) - 1)]
        self.calls += 1
        d = compute_deltas(rec).deltas
        q = as_points(queries, "queries")
        if len(q) != len(d):
            d = np.repeat(d.mean(axis=0)[None], len(q), axis=0)
        return accumulate(q, d, rec.timestep)


# -- policy ------------------------------------------------------------------

@dataclass(frozen=True)
class PolicyConfig:
    query_radius: float = 0.10
    beta: float = 1.0
    min_step: float = 0.05
    points_budget: int = 2048
    crop_side: float = 0.8
    dropout: float = 0.0
    camera: CameraModel | None = None

    @classmethod
    def from_json(cls, d):
        fields = {"query_radius", "beta", "min_step", "points_budget", "crop_side", "dropout"}
        unknown = set(d) - fields
        if unknown:
            raise ConfigurationError(f"unknown policy fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class StepInfo:
    command: SE3Transform
    flow: GeneralFlow
    weights: np.ndarray
    workaround: bool
    degenerate_steps: int


def rescale_displacement(command: SE3Transform, point, length) -> SE3Transform:
    """Keep the rotation, scale the displacement of ``point`` to ``length``.

    A zero displacement stays zero.
    """
    g = as_point(point)
    R = command.rotation
    disp = se3_apply(command, g) - g
    n = np.linalg.norm(disp)
    if n < 1e-12:
        return SE3Transform(R, g - R @ g)
    return SE3Transform(R, g + disp * (length / n) - R @ g)


def policy_step(world: World, predictor: FlowPredictor, task: Task, config: PolicyConfig = PolicyConfig(),
                seed=0, return_info=False):
    """One iteration of the closed-loop policy; returns the SE(3) command.

    When the weighted mean path length of the predicted flow is below
    ``config.min_step`` all steps are merged into one transform whose gripper
    displacement is rescaled to exactly ``config.min_step``.
    """
    rng = np.random.default_rng(seed)
    scene_seed, flow_seed = (int(s) for s in rng.integers(2**31, size=2))
    try:
        scene = render_scene(world, config.camera, config.points_budget, config.crop_side, scene_seed,
                             dropout=config.dropout)
    except EmptySceneError as exc:
        # nothing visible around the gripper: same outcome as an empty query ball
        raise LostContactError(str(exc)) from None
    g = world.gripper.position
    queries = select_query_points(scene, g, config.query_radius)
    if len(queries) == 0:
        raise LostContactError("no scene points within the query radius of the gripper")
    if hasattr(predictor, "observe"):
        predictor.observe(world)
    flow = predictor.predict(scene, queries, task.instruction, flow_seed)
    if flow.n_queries != len(queries):
        raise GenFlowError("predictor returned a flow for a different number of queries")
    w = policy_weights(queries, g, config.beta)
    steps, degenerate = align_flow_steps(flow, w)
    command = compose_chronological(steps)
    mean_length = float(w @ compute_deltas(flow).total_lengths())
    workaround = mean_length < config.min_step
    if workaround:
        command = rescale_displacement(command, g, config.min_step)
    if return_info:
        return StepInfo(command, flow, w, workaround, int(sum(degenerate)))
    return command


def apply_command(world: World, command: SE3Transform) -> World:
    """Execute a command kinematically.

    A free gripper simply moves. An attached gripper drives its part: the
    joint advances by the 1-DOF motion closest to the commanded grasp point,
    is clamped to its limits, and the gripper follows the part rigidly.
    """
    g = world.gripper
    if g.attachment is None:
        return replace(world, gripper=replace(g, pose=command @ g.pose))
    a = g.attachment
    obj = world.obj(a.object_id)
    j = obj.joint(a.part)
    old_pose = obj.part_pose(a.part)
    grasp = se3_apply(old_pose, a.grasp_local)
    wanted = se3_apply(command, grasp)
    if j.kind == "prismatic":
        _, axis = obj.axis_world(a.part)
        new_obj = obj.with_joint_value(a.part, j.value + float((wanted - grasp) @ axis))
    elif j.kind == "revolute":
        o, axis = obj.axis_world(a.part)
        v0 = grasp - o
        v1 = wanted - o
        v0 = v0 - (v0 @ axis) * axis
        v1 = v1 - (v1 @ axis) * axis
        if np.linalg.norm(v0) < 1e-12 or np.linalg.norm(v1) < 1e-12:
            dq = 0.0
        else:
            dq = float(np.arctan2(axis @ np.cross(v0, v1), v0 @ v1))
        new_obj = obj.with_joint_value(a.part, j.value + dq)
    elif j.kind == "free":
        world_pose = command @ old_pose
        new_obj = obj.with_free_pose(a.part, obj.base_pose.inverse() @ world_pose)
    else:
        new_obj = obj
    rel = new_obj.part_pose(a.part) @ old_pose.inverse()
    gripper = replace(g, pose=rel @ g.pose)
    return replace(world.with_object(a.object_id, new_obj), gripper=gripper)


# -- episodes ----------------------------------------------------------------

@dataclass
class EpisodeResult:
    success: bool
    steps: int
    final_value: float
    log: list = field(default_factory=list)
    reason: str = ""

    def to_json(self):
        value = None if np.isnan(self.final_value) else self.final_value
        return {"success": self.success, "steps": self.steps, "final_value": value,
                "reason": self.reason, "log": self.log}


def _log_entry(k, info: StepInfo, world, task):
    c = info.command
    return {
        "step": k,
        "rotation": [float(v) for v in c.rotation.reshape(-1)],
        "translation": [float(v) for v in c.translation],
        "n_queries": int(info.flow.n_queries),
        "workaround": bool(info.workaround),
        "degenerate_steps": info.degenerate_steps,
        "value": task_progress(world, task),
    }


def run_episode(world: World, task: Task, predictor: FlowPredictor, max_steps=50,
                config: PolicyConfig = PolicyConfig(), seed=0, on_step=None) -> EpisodeResult:
    """Alternate :func:`policy_step` and :func:`apply_command` until done.

    Success is checked after every executed command; ``max_steps=0`` therefore
    never succeeds. Any error ends the episode as a failure with its message
    as ``reason``. ``on_step(k, world, info)`` is called after each step.
    """
    try:
        validate_task(world, task)
    except UnsupportedTaskError:
        raise
    except GenFlowError as exc:
        return EpisodeResult(False, 0, float("nan"), [], f"configuration: {exc}")
    task = with_origin(world, task)
    if hasattr(predictor, "reset"):
        predictor.reset()
    rng = np.random.default_rng(seed)
    log = []
    for k in range(max_steps):
        try:
            info = policy_step(world, predictor, task, config, int(rng.integers(2**31)), return_info=True)
        except LostContactError as exc:
            return EpisodeResult(False, k, task_progress(world, task), log, f"lost contact: {exc}")
        except GenFlowError as exc:
            return EpisodeResult(False, k, task_progress(world, task), log, f"error: {exc}")
        world = apply_command(world, info.command)
        log.append(_log_entry(k, info, world, task))
        if on_step is not None:
            on_step(k, world, info)
        if evaluate_success(world, task):
            return EpisodeResult(True, k + 1, task_progress(world, task), log, "success")
    return EpisodeResult(False, max_steps, task_progress(world, task), log, "max steps reached")
