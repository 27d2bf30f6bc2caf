"""Built-in robot models shipped with the package.

``planar2``     two unit links rotating about z
``chain6``      6-DoF spatial arm used by the IK tests
``humanoid23``  23-joint biped (legs 2x6, waist 3, arms 2x4) whose joint
                groups match the Adam Pro PD gain table
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .kinematics import FrameSpec, JointSpec, RobotModel, load_model, model_from_dict
from .transforms import RigidTransform

X, Y, Z = (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)


def _origin(pos=(0.0, 0.0, 0.0)) -> RigidTransform:
    return RigidTransform(translation=np.asarray(pos, dtype=float))


def planar2() -> RobotModel:
    joints = [
        JointSpec("j0", -1, "revolute", Z, _origin(), (-np.pi, np.pi), 10.0, 50.0),
        JointSpec("j1", 0, "revolute", Z, _origin((1, 0, 0)), (-np.pi, np.pi), 10.0, 50.0),
    ]
    frames = [FrameSpec("base", -1), FrameSpec("elbow", 1), FrameSpec("tip", 1, _origin((1, 0, 0)))]
    return RobotModel("planar2", joints, frames)


def chain6() -> RobotModel:
    axes = [Z, Y, Y, X, Y, Z]
    offsets = [(0, 0, 0.1), (0, 0, 0.2), (0.35, 0, 0), (0.3, 0, 0), (0.05, 0, 0), (0.1, 0, 0)]
    limits = [(-2.9, 2.9), (-1.8, 1.8), (-2.4, 2.4), (-2.9, 2.9), (-2.0, 2.0), (-2.9, 2.9)]
    joints = [
        JointSpec(f"a{i}", i - 1, "revolute", axes[i], _origin(offsets[i]), limits[i], 3.0, 80.0)
        for i in range(6)
    ]
    frames = [
        FrameSpec("base", -1),
        FrameSpec("elbow", 2),
        FrameSpec("wrist", 4),
        FrameSpec("tool", 5, _origin((0.12, 0, 0))),
    ]
    return RobotModel("chain6", joints, frames)


# name, axis, origin offset from parent joint frame, limits, vel, torque
_LEG = [
    ("hip_pitch", Y, None, (-2.0, 1.6), 20.0, 150.0),
    ("hip_roll", X, (0, 0, 0), (-0.5, 0.8), 20.0, 150.0),
    ("hip_yaw", Z, (0, 0, 0), (-0.8, 0.8), 20.0, 150.0),
    ("knee_pitch", Y, (0, 0, -0.4), (-0.1, 2.3), 20.0, 150.0),
    ("ankle_pitch", Y, (0, 0, -0.4), (-0.8, 0.6), 20.0, 50.0),
    ("ankle_roll", X, (0, 0, 0), (-0.4, 0.4), 20.0, 50.0),
]
_WAIST = [
    ("waist_yaw", Z, (0, 0, 0.1), (-1.5, 1.5), 15.0, 150.0),
    ("waist_roll", X, (0, 0, 0), (-0.5, 0.5), 15.0, 150.0),
    ("waist_pitch", Y, (0, 0, 0), (-0.5, 1.0), 15.0, 150.0),
]
_ARM = [
    ("shoulder_pitch", Y, None, (-3.0, 2.0), 20.0, 40.0),
    ("shoulder_roll", X, (0, 0, 0), (-1.5, 2.5), 20.0, 40.0),
    ("shoulder_yaw", Z, (0, 0, 0), (-2.5, 2.5), 20.0, 40.0),
    ("elbow", Y, (0, 0, -0.25), (-2.2, 0.2), 20.0, 40.0),
]


def humanoid23() -> RobotModel:
    joints: list[JointSpec] = []
    frames: list[FrameSpec] = [FrameSpec("pelvis", -1)]

    def add_chain(prefix, spec, parent, first_offset):
        idx = {}
        for name, axis, off, lim, vel, tau in spec:
            off = first_offset if off is None else off
            joints.append(JointSpec(f"{prefix}{name}", parent, "revolute", axis, _origin(off), lim, vel, tau))
            parent = len(joints) - 1
            idx[name] = parent
        return idx

    legs = {}
    for side, y in (("left_", 0.1), ("right_", -0.1)):
        legs[side] = add_chain(side, _LEG, -1, (0, y, -0.05))
    waist = add_chain("", _WAIST, -1, None)
    arms = {}
    for side, y in (("left_", 0.18), ("right_", -0.18)):
        arms[side] = add_chain(side, _ARM, waist["waist_pitch"], (0, y, 0.35))

    frames.append(FrameSpec("torso", waist["waist_pitch"], _origin((0, 0, 0.2))))
    frames.append(FrameSpec("head", waist["waist_pitch"], _origin((0, 0, 0.55))))
    for side in ("left_", "right_"):
        leg = legs[side]
        frames += [
            FrameSpec(f"{side}hip", leg["hip_yaw"]),
            FrameSpec(f"{side}knee", leg["knee_pitch"]),
            FrameSpec(f"{side}ankle", leg["ankle_roll"]),
            FrameSpec(f"{side}foot", leg["ankle_roll"], _origin((0.03, 0, -0.05))),
            FrameSpec(f"{side}toe", leg["ankle_roll"], _origin((0.15, 0, -0.05))),
        ]
    for side in ("left_", "right_"):
        arm = arms[side]
        frames += [
            FrameSpec(f"{side}shoulder", arm["shoulder_yaw"]),
            FrameSpec(f"{side}elbow", arm["elbow"]),
            FrameSpec(f"{side}wrist", arm["elbow"], _origin((0, 0, -0.25))),
        ]
    return RobotModel("humanoid23", joints, frames)


BUILDERS = {"planar2": planar2, "chain6": chain6, "humanoid23": humanoid23}

# Adam Pro PD gains (Kp N*m/rad, Kd N*m*s/rad) by joint group.
ADAM_PRO_GAINS = {
    "hip_pitch": (305.0, 5.0),
    "hip_roll": (255.0, 3.5),
    "hip_yaw": (255.0, 3.5),
    "knee_pitch": (305.0, 5.0),
    "ankle_pitch": (50.0, 0.8),
    "ankle_roll": (30.0, 0.35),
    "waist_roll": (255.0, 3.5),
    "waist_pitch": (305.0, 5.0),
    "waist_yaw": (255.0, 3.5),
    "shoulder_pitch": (40.0, 1.0),
    "shoulder_roll": (40.0, 1.0),
    "shoulder_yaw": (40.0, 1.0),
    "elbow": (40.0, 1.0),
}

# Per-joint-group plant parameters (inertia kg*m^2, viscous damping, dry friction).
HUMANOID_DYNAMICS = {
    "hip_pitch": (0.20, 0.1, 0.05),
    "hip_roll": (0.20, 0.1, 0.05),
    "hip_yaw": (0.15, 0.1, 0.05),
    "knee_pitch": (0.15, 0.1, 0.05),
    "ankle_pitch": (0.02, 0.02, 0.01),
    "ankle_roll": (0.01, 0.02, 0.01),
    "waist_roll": (0.30, 0.1, 0.05),
    "waist_pitch": (0.30, 0.1, 0.05),
    "waist_yaw": (0.30, 0.1, 0.05),
    "shoulder_pitch": (0.03, 0.02, 0.01),
    "shoulder_roll": (0.03, 0.02, 0.01),
    "shoulder_yaw": (0.02, 0.02, 0.01),
    "elbow": (0.02, 0.02, 0.01),
}


def joint_group(joint_name: str) -> str:
    for prefix in ("left_", "right_"):
        if joint_name.startswith(prefix):
            return joint_name[len(prefix):]
    return joint_name


def builtin_names() -> list[str]:
    return sorted(BUILDERS)


def load_builtin(name: str) -> RobotModel:
    """Load a shipped model from its JSON document."""
    if name not in BUILDERS:
        raise KeyError(f"unknown built-in model {name!r}; choose from {builtin_names()}")
    ref = resources.files("clot") / "data" / "models" / f"{name}.json"
    with resources.as_file(ref) as path:
        return load_model(path)


def resolve_model(spec: str) -> RobotModel:
    """A built-in model name or a path to a model JSON file."""
    if spec in BUILDERS:
        return load_builtin(spec)
    return load_model(spec)


def write_builtin_models(directory) -> None:
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, build in BUILDERS.items():
        doc = build().to_dict()
        (directory / f"{name}.json").write_text(json.dumps(doc, indent=1) + "\n")
        model_from_dict(doc)
