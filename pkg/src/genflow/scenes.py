"""Procedural test scenes: a safe with a hinged door and a cabinet drawer.

Both are sampled on regular grids so every render is deterministic. Bodies
are kept more than 10 cm from the handle, so the policy's query ball only
touches the moving part.
"""

import numpy as np

from .articulation import ArticulatedObject, JointModel
from .errors import ConfigurationError
from .geometry import PointCloud, SE3Transform
from .sim import Gripper, Task, World

SAFE_DOOR_LIMITS = (0.0, np.deg2rad(100.0))
SAFE_OPEN_GOAL = np.deg2rad(90.0)
DRAWER_LIMITS = (0.0, 0.30)


def _plane(origin, u, v, nu, nv):
    a = np.linspace(0.0, 1.0, nu)
    b = np.linspace(0.0, 1.0, nv)
    A, B = np.meshgrid(a, b, indexing="ij")
    return np.asarray(origin) + A.reshape(-1, 1) * np.asarray(u) + B.reshape(-1, 1) * np.asarray(v)


def _segment(p0, p1, n):
    s = np.linspace(0.0, 1.0, n)[:, None]
    return (1 - s) * np.asarray(p0, dtype=float) + s * np.asarray(p1, dtype=float)


def _painted(points, rgb):
    return PointCloud(points, np.tile(rgb, (len(points), 1)))


def make_safe(door_angle=0.0, width=0.4, height=0.4, depth=0.3, name="safe"):
    """Safe whose door hinges about a vertical axis through the origin.

    The closed door lies in the plane x = 0 and opens toward +x. The handle
    sits 5 cm proud of the door near its free edge.
    """
    door = _plane([0.0, 0.02, 0.0], [0.0, width - 0.02, 0.0], [0.0, 0.0, height], 14, 14)
    hy, hz = width - 0.05, height / 2.0
    handle = np.vstack([
        _segment([0.05, hy, hz - 0.05], [0.05, hy, hz + 0.05], 9),
        _segment([0.01, hy, hz - 0.05], [0.04, hy, hz - 0.05], 4),
        _segment([0.01, hy, hz + 0.05], [0.04, hy, hz + 0.05], 4),
    ])
    back = -0.12 - depth
    body = np.vstack([
        _plane([back, 0.0, 0.0], [0.0, width, 0.0], [0.0, 0.0, height], 12, 12),
        _plane([back, 0.0, 0.0], [depth, 0.0, 0.0], [0.0, 0.0, height], 8, 12),
        _plane([back, width, 0.0], [depth, 0.0, 0.0], [0.0, 0.0, height], 8, 12),
        _plane([back, 0.0, 0.0], [depth, 0.0, 0.0], [0.0, width, 0.0], 8, 12),
        _plane([back, 0.0, height], [depth, 0.0, 0.0], [0.0, width, 0.0], 8, 12),
    ])
    parts = {
        "body": _painted(body, [0.5, 0.5, 0.5]),
        "door": PointCloud.concatenate([_painted(door, [0.7, 0.6, 0.2]), _painted(handle, [0.1, 0.1, 0.1])]),
    }
    joints = {
        "body": JointModel("fixed"),
        "door": JointModel("revolute", [0.0, 0.0, 0.0], [0.0, 0.0, -1.0], SAFE_DOOR_LIMITS, door_angle),
    }
    return ArticulatedObject(parts, joints, SE3Transform.identity(), name)


SAFE_HANDLE = np.array([0.05, 0.35, 0.2])


def make_drawer(opening=0.0, width=0.4, height=0.2, depth=0.4, name="drawer"):
    """Cabinet with one drawer sliding along +x; the drawer front is at x = 0."""
    half = width / 2.0
    front = _plane([0.0, -half, 0.0], [0.0, width, 0.0], [0.0, 0.0, height], 14, 8)
    handle = np.vstack([
        _segment([0.05, -0.05, height / 2], [0.05, 0.05, height / 2], 9),
        _segment([0.01, -0.05, height / 2], [0.04, -0.05, height / 2], 4),
        _segment([0.01, 0.05, height / 2], [0.04, 0.05, height / 2], 4),
    ])
    box = np.vstack([
        _plane([-depth, -half, 0.0], [depth - 0.02, 0.0, 0.0], [0.0, width, 0.0], 10, 10),
        _plane([-depth, -half, 0.0], [depth - 0.02, 0.0, 0.0], [0.0, 0.0, height], 10, 5),
        _plane([-depth, half, 0.0], [depth - 0.02, 0.0, 0.0], [0.0, 0.0, height], 10, 5),
        _plane([-depth, -half, 0.0], [0.0, width, 0.0], [0.0, 0.0, height], 10, 5),
    ])
    d = depth + 0.05
    cab = np.vstack([
        _plane([-d, -half - 0.05, -0.02], [d, 0.0, 0.0], [0.0, width + 0.1, 0.0], 10, 10),
        _plane([-d, -half - 0.05, height + 0.05], [d, 0.0, 0.0], [0.0, width + 0.1, 0.0], 10, 10),
        _plane([-d, -half - 0.05, -0.02], [d, 0.0, 0.0], [0.0, 0.0, height + 0.07], 10, 6),
        _plane([-d, half + 0.05, -0.02], [d, 0.0, 0.0], [0.0, 0.0, height + 0.07], 10, 6),
        _plane([-d, -half - 0.05, -0.02], [0.0, width + 0.1, 0.0], [0.0, 0.0, height + 0.07], 10, 6),
    ])
    parts = {
        "cabinet": _painted(cab, [0.4, 0.3, 0.2]),
        "drawer": PointCloud.concatenate([_painted(np.vstack([front, box]), [0.8, 0.7, 0.5]),
                                          _painted(handle, [0.1, 0.1, 0.1])]),
    }
    joints = {
        "cabinet": JointModel("fixed"),
        "drawer": JointModel("prismatic", [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], DRAWER_LIMITS, opening),
    }
    return ArticulatedObject(parts, joints, SE3Transform.identity(), name)


DRAWER_HANDLE = np.array([0.05, 0.0, 0.1])


def make_box(position=(0.0, 0.0, 0.0), size=0.08, name="box"):
    """Free rigid cube resting with its bottom face at ``position``."""
    s = size
    faces = np.vstack([
        _plane([-s / 2, -s / 2, 0.0], [s, 0, 0], [0, s, 0], 5, 5),
        _plane([-s / 2, -s / 2, s], [s, 0, 0], [0, s, 0], 5, 5),
        _plane([-s / 2, -s / 2, 0.0], [s, 0, 0], [0, 0, s], 5, 5),
        _plane([-s / 2, s / 2, 0.0], [s, 0, 0], [0, 0, s], 5, 5),
        _plane([-s / 2, -s / 2, 0.0], [0, s, 0], [0, 0, s], 5, 5),
        _plane([s / 2, -s / 2, 0.0], [0, s, 0], [0, 0, s], 5, 5),
    ])
    parts = {"box": _painted(np.unique(faces, axis=0), [0.2, 0.4, 0.8])}
    joints = {"box": JointModel("free", pose=SE3Transform.from_translation(position))}
    return ArticulatedObject(parts, joints, SE3Transform.identity(), name)


def safe_world(door_deg=0.0):
    obj = make_safe(np.deg2rad(door_deg))
    handle = obj.part_pose("door").apply(SAFE_HANDLE)
    world = World({obj.name: obj}, Gripper(SE3Transform.from_translation(handle)))
    return world.attach(obj.name, "door")


def drawer_world(opening=0.0):
    obj = make_drawer(opening)
    handle = obj.part_pose("drawer").apply(DRAWER_HANDLE)
    world = World({obj.name: obj}, Gripper(SE3Transform.from_translation(handle)))
    return world.attach(obj.name, "drawer")


def box_world(position=(0.0, 0.0, 0.0)):
    obj = make_box(position)
    top = np.asarray(position, dtype=float) + [0.0, 0.0, 0.08]
    world = World({obj.name: obj}, Gripper(SE3Transform.from_translation(top)))
    return world.attach(obj.name, "box")


def builtin_world(name, **params):
    builders = {"safe": safe_world, "drawer": drawer_world, "box": box_world}
    if name not in builders:
        raise ConfigurationError(f"unknown builtin world {name!r}; choose from {sorted(builders)}")
    return builders[name](**params)


def standard_task(name):
    """Named benchmark tasks with their canonical start worlds."""
    table = {
        "open-safe": (lambda: safe_world(0.0), Task("open", "safe", "door", SAFE_OPEN_GOAL)),
        "close-safe": (lambda: safe_world(90.0), Task("close", "safe", "door")),
        "open-drawer": (lambda: drawer_world(0.0), Task("open", "drawer", "drawer")),
        "close-drawer": (lambda: drawer_world(0.30), Task("close", "drawer", "drawer")),
        "pickup-box": (lambda: box_world(), Task("pickup", "box", "box", [0.0, 0.0, 0.25])),
        "push-box": (lambda: box_world(), Task("push", "box", "box", [0.25, 0.0, 0.0])),
    }
    if name not in table:
        raise ConfigurationError(f"unknown standard task {name!r}")
    make, task = table[name]
    return make(), task
