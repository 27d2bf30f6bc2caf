"""Synthetic motion clips used as fixtures and demo inputs.

Human keypoints are produced by running FK on a robot model, so every clip
made here is exactly reachable by retargeting onto the same model.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .kinematics import RobotModel, frame_positions
from .motion_data import MotionClip, MotionFrame
from .transforms import RigidTransform, yaw_quat

JointFn = Callable[[float], np.ndarray]
RootFn = Callable[[float], RigidTransform]


def clip_from_motion(
    model: RobotModel,
    q_fn: JointFn,
    root_fn: RootFn,
    fps: float,
    duration: float,
    clip_id: str,
    category: str = "WALK",
    include_joints: bool = False,
    keypoint_frames: Sequence[int] | None = None,
    t0: float = 0.0,
) -> MotionClip:
    frames_idx = list(range(model.num_frames)) if keypoint_frames is None else list(keypoint_frames)
    count = int(round(duration * fps))
    frames = []
    for k in range(count):
        t = t0 + k / fps
        q = np.clip(q_fn(t), model.lower, model.upper)
        root = root_fn(t)
        kp = frame_positions(model, root, q)[frames_idx]
        frames.append(MotionFrame(t=t, root=root, keypoints=kp, joint_pos=q if include_joints else None))
    return MotionClip(clip_id, category, float(fps), frames)


def _joint_index(model: RobotModel) -> dict[str, int]:
    return {name: i for i, name in enumerate(model.joint_names)}


def humanoid_rest_pose(model: RobotModel) -> np.ndarray:
    """Slightly crouched stance that keeps knees away from the straight-leg singularity."""
    idx = _joint_index(model)
    q = np.zeros(model.n)
    for side in ("left_", "right_"):
        q[idx[f"{side}hip_pitch"]] = -0.2
        q[idx[f"{side}knee_pitch"]] = 0.4
        q[idx[f"{side}ankle_pitch"]] = -0.2
        q[idx[f"{side}elbow"]] = -0.3
    q[idx["left_shoulder_roll"]] = 0.15
    q[idx["right_shoulder_roll"]] = -0.15
    return q


def standing_height(model: RobotModel, q: np.ndarray) -> float:
    """Root height that puts the lowest frame at z = 0."""
    pos = frame_positions(model, RigidTransform(), q)
    return float(-pos[:, 2].min())


def humanoid_walk_fn(model: RobotModel, freq: float = 0.5, amp: float = 1.0) -> JointFn:
    idx = _joint_index(model)
    rest = humanoid_rest_pose(model)

    def q_fn(t: float) -> np.ndarray:
        ph = 2.0 * np.pi * freq * t
        q = rest.copy()
        for side, sign in (("left_", 1.0), ("right_", -1.0)):
            s = sign * np.sin(ph)
            lift = max(0.0, sign * np.cos(ph))
            q[idx[f"{side}hip_pitch"]] += amp * (-0.2 * s - 0.1 * lift)
            q[idx[f"{side}knee_pitch"]] += amp * 0.25 * lift
            q[idx[f"{side}ankle_pitch"]] += amp * (0.2 * s - 0.1 * lift)
            q[idx[f"{side}hip_roll"]] += amp * 0.03 * np.cos(ph)
            q[idx[f"{side}shoulder_pitch"]] += amp * 0.25 * s
            q[idx[f"{side}elbow"]] += amp * -0.1 * (1 + s)
        q[idx["waist_yaw"]] += amp * 0.05 * np.sin(ph)
        q[idx["waist_pitch"]] += amp * 0.03 * np.cos(2 * ph)
        return q

    return q_fn


def humanoid_walk(
    model: RobotModel,
    duration: float = 10.0,
    fps: float = 120.0,
    speed: float = 0.3,
    freq: float = 0.5,
    clip_id: str = "synthetic_walk",
    include_joints: bool = False,
) -> MotionClip:
    """Slow straight walk: sinusoidal gait with the root moving along +x."""
    q_fn = humanoid_walk_fn(model, freq)
    height = standing_height(model, humanoid_rest_pose(model))

    def root_fn(t):
        bob = 0.01 * np.cos(4.0 * np.pi * freq * t)
        return RigidTransform(yaw_quat(0.0), [speed * t, 0.0, height + bob])

    return clip_from_motion(model, q_fn, root_fn, fps, duration, clip_id, "WALK", include_joints)


def humanoid_squat(model: RobotModel, duration: float = 4.0, fps: float = 120.0, freq: float = 0.4,
                   clip_id: str = "synthetic_squat") -> MotionClip:
    idx = _joint_index(model)
    rest = humanoid_rest_pose(model)

    def q_fn(t):
        depth = 0.5 * (1 - np.cos(2 * np.pi * freq * t))
        q = rest.copy()
        for side in ("left_", "right_"):
            q[idx[f"{side}hip_pitch"]] -= 0.5 * depth
            q[idx[f"{side}knee_pitch"]] += 1.0 * depth
            q[idx[f"{side}ankle_pitch"]] -= 0.5 * depth
            q[idx[f"{side}shoulder_pitch"]] -= 0.6 * depth
        return q

    def root_fn(t):
        return RigidTransform(yaw_quat(0.0), [0.0, 0.0, standing_height(model, q_fn(t))])

    return clip_from_motion(model, q_fn, root_fn, fps, duration, clip_id, "CROUCHING")


def humanoid_turn(model: RobotModel, duration: float = 4.0, fps: float = 120.0, yaw_rate: float = 0.4,
                  clip_id: str = "synthetic_turn") -> MotionClip:
    q_fn = humanoid_walk_fn(model, freq=0.5, amp=0.5)
    height = standing_height(model, humanoid_rest_pose(model))

    def root_fn(t):
        return RigidTransform(yaw_quat(yaw_rate * t), [0.0, 0.0, height])

    return clip_from_motion(model, q_fn, root_fn, fps, duration, clip_id, "LATERAL")


def constant_clip(model: RobotModel, q: np.ndarray, root: RigidTransform, fps: float = 50.0,
                  duration: float = 1.0, clip_id: str = "constant", category: str = "BALANCE") -> MotionClip:
    q = np.asarray(q, dtype=float)
    return clip_from_motion(model, lambda t: q, lambda t: root, fps, duration, clip_id, category)


def linear_root_clip(velocity, fps: float = 120.0, duration: float = 1.0, num_keypoints: int = 2,
                     clip_id: str = "linear", category: str = "WALK") -> MotionClip:
    """Root and keypoints translating at constant ``velocity`` from the origin."""
    velocity = np.asarray(velocity, dtype=float)
    offsets = np.arange(num_keypoints, dtype=float)[:, None] * np.array([0.0, 0.1, 0.5])
    frames = []
    for k in range(int(round(duration * fps))):
        t = k / fps
        p = velocity * t
        frames.append(MotionFrame(t, RigidTransform(yaw_quat(0.3 * t), p), p + offsets))
    return MotionClip(clip_id, category, float(fps), frames)


def planar_sweep(model: RobotModel, fps: float = 50.0, duration: float = 2.0, freq: float = 0.25,
                 clip_id: str = "planar_sweep") -> MotionClip:
    """Two-link arm slowly sweeping; used for retargeting tracking checks."""
    def q_fn(t):
        return np.array([0.6 * np.sin(2 * np.pi * freq * t), 0.8 + 0.3 * np.cos(2 * np.pi * freq * t)])

    return clip_from_motion(model, q_fn, lambda t: RigidTransform(), fps, duration, clip_id, "SWING")


def sample_corpus(humanoid: RobotModel, planar: RobotModel) -> list[MotionClip]:
    """The small clip set shipped in ``clot/data/clips``."""
    return [
        humanoid_walk(humanoid, duration=10.0, fps=120.0, clip_id="walk_10s"),
        humanoid_squat(humanoid, duration=4.0, fps=120.0, clip_id="squat_4s"),
        humanoid_turn(humanoid, duration=4.0, fps=60.0, clip_id="turn_4s"),
        planar_sweep(planar, fps=50.0, duration=2.0, clip_id="planar_sweep_2s"),
    ]


def write_sample_corpus(directory) -> list[str]:
    """Write the sample clips plus ``manifest.json``; returns the clip file names."""
    import json
    from pathlib import Path

    from .models import load_builtin
    from .motion_data import save_clip

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for clip in sample_corpus(load_builtin("humanoid23"), load_builtin("planar2")):
        name = f"{clip.id}.clot.jsonl"
        save_clip(clip, directory / name)
        names.append(name)
    (directory / "manifest.json").write_text(json.dumps(names, indent=1) + "\n")
    return names
