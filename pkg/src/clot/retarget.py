"""Online human-to-robot retargeting by iterated damped-least-squares IK."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .kinematics import (
    IkTask,
    RobotModel,
    frame_quaternions,
    integrate_and_clamp,
    kinematics,
    solve_dls_ik,
)
from .motion_data import MotionClip, MotionFrame
from .transforms import RigidTransform, yaw_of, yaw_quat


@dataclass(frozen=True)
class KeypointMapping:
    keypoint: int
    frame: int
    weight: float = 1.0
    scale: float = 1.0


@dataclass(frozen=True)
class RetargetConfig:
    mappings: tuple[KeypointMapping, ...]
    lam: float = 1e-3
    iterations_per_frame: int = 4
    # extra IK rounds on the very first frame so the warm start begins converged
    settle_iterations: int = 200

    def __post_init__(self):
        object.__setattr__(self, "mappings", tuple(self.mappings))
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.iterations_per_frame < 1:
            raise ValueError("iterations_per_frame must be >= 1")
        for m in self.mappings:
            if m.weight < 0:
                raise ValueError("mapping weights must be >= 0")

    def validate(self, model: RobotModel, num_keypoints: int) -> None:
        for i, m in enumerate(self.mappings):
            if not 0 <= m.frame < model.num_frames:
                raise ValueError(f"mappings[{i}]: frame {m.frame} out of range")
            if not 0 <= m.keypoint < num_keypoints:
                raise ValueError(f"mappings[{i}]: keypoint {m.keypoint} out of range")

    @classmethod
    def identity(cls, model: RobotModel, **kwargs) -> "RetargetConfig":
        """Keypoint i drives frame i, skipping the root frame (its pose is copied)."""
        maps = [KeypointMapping(i, i) for i in range(model.num_frames) if i != model.root_frame]
        return cls(tuple(maps), **kwargs)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "iterations_per_frame": self.iterations_per_frame,
            "settle_iterations": self.settle_iterations,
            "mappings": [
                {"keypoint": m.keypoint, "frame": m.frame, "weight": m.weight, "scale": m.scale}
                for m in self.mappings
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict, model: RobotModel | None = None) -> "RetargetConfig":
        maps = []
        for i, md in enumerate(doc.get("mappings", [])):
            frame = md["frame"]
            if isinstance(frame, str):
                if model is None:
                    raise ValueError(f"mappings[{i}]: frame names need a model")
                frame = model.frame_index(frame)
            maps.append(KeypointMapping(int(md["keypoint"]), int(frame), float(md.get("weight", 1.0)),
                                        float(md.get("scale", 1.0))))
        if not maps and model is not None:
            maps = list(cls.identity(model).mappings)
        return cls(
            tuple(maps),
            lam=float(doc.get("lambda", 1e-3)),
            iterations_per_frame=int(doc.get("iterations_per_frame", 4)),
            settle_iterations=int(doc.get("settle_iterations", 200)),
        )


def load_retarget_config(path, model: RobotModel | None = None) -> RetargetConfig:
    return RetargetConfig.from_dict(json.loads(Path(path).read_text()), model)


def scale_keypoints(keypoints, root, config: RetargetConfig) -> np.ndarray:
    """One target per mapping: the keypoint's offset from the human root times its scale."""
    kp = np.asarray(keypoints, dtype=float).reshape(-1, 3)
    origin = root.translation if isinstance(root, RigidTransform) else np.asarray(root, dtype=float)
    out = np.empty((len(config.mappings), 3))
    for i, m in enumerate(config.mappings):
        point = kp[m.keypoint]
        out[i] = point if m.scale == 1.0 else origin + m.scale * (point - origin)
    return out


def reference_root(human_root: RigidTransform) -> RigidTransform:
    """Robot reference root: human root position with heading (yaw) only."""
    return RigidTransform(yaw_quat(yaw_of(human_root.rotation)), human_root.translation)


def retarget_frame(
    model: RobotModel,
    q_prev,
    root: RigidTransform,
    human_frame: MotionFrame,
    config: RetargetConfig,
    dt: float,
    iterations: int | None = None,
) -> np.ndarray:
    """Warm-started IK toward the scaled keypoints of one human frame.

    Task errors are divided by ``dt`` so the solved velocity integrates to a
    full Gauss-Newton step; velocity and position clamping bound the motion.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    targets = scale_keypoints(human_frame.keypoints, human_frame.root, config)
    tasks = [IkTask(m.frame, targets[i], m.weight) for i, m in enumerate(config.mappings)]
    q = np.asarray(q_prev, dtype=float).copy()
    for _ in range(config.iterations_per_frame if iterations is None else iterations):
        v = solve_dls_ik(model, root, q, tasks, config.lam, error_gain=1.0 / dt)
        q = integrate_and_clamp(q, v, dt, model)
    return q


def task_errors(model: RobotModel, q, root: RigidTransform, human_frame: MotionFrame,
                config: RetargetConfig) -> np.ndarray:
    targets = scale_keypoints(human_frame.keypoints, human_frame.root, config)
    pos = kinematics(model, root, q).frame_pos
    frames = [m.frame for m in config.mappings]
    return np.linalg.norm(pos[frames] - targets, axis=1)


@dataclass
class ReferenceTrajectory:
    """Robot reference motion sampled at ``fps``."""

    fps: float
    t: np.ndarray  # (T,)
    root_pos: np.ndarray  # (T, 3)
    root_quat: np.ndarray  # (T, 4)
    q: np.ndarray  # (T, n)
    frame_pos: np.ndarray  # (T, F, 3)
    frame_quat: np.ndarray  # (T, F, 4)
    contacts: np.ndarray | None = field(default=None)  # (T, n_feet) bool

    def __len__(self) -> int:
        return len(self.t)

    def root(self, k: int) -> RigidTransform:
        return RigidTransform(self.root_quat[k], self.root_pos[k])

    def clamp_index(self, k: int) -> int:
        return min(max(k, 0), len(self.t) - 1)

    def joint_velocity(self, k: int) -> np.ndarray:
        """Backward difference (forward at k = 0)."""
        if len(self.t) < 2:
            return np.zeros(self.q.shape[1])
        if k <= 0:
            return (self.q[1] - self.q[0]) * self.fps
        k = self.clamp_index(k)
        return (self.q[k] - self.q[k - 1]) * self.fps

    def to_clip(self, clip_id: str, category: str) -> MotionClip:
        frames = [
            MotionFrame(float(self.t[k]), self.root(k), self.frame_pos[k], joint_pos=self.q[k])
            for k in range(len(self.t))
        ]
        return MotionClip(clip_id, category, float(self.fps), frames)

    @classmethod
    def from_states(cls, model: RobotModel, fps: float, t, roots: Sequence[RigidTransform], qs) -> "ReferenceTrajectory":
        qs = np.asarray(qs, dtype=float)
        pos, quat = [], []
        for root, q in zip(roots, qs):
            kin = kinematics(model, root, q)
            pos.append(kin.frame_pos)
            quat.append(frame_quaternions(kin))
        return cls(
            fps=float(fps),
            t=np.asarray(t, dtype=float),
            root_pos=np.array([r.translation for r in roots]),
            root_quat=np.array([r.rotation for r in roots]),
            q=qs,
            frame_pos=np.array(pos),
            frame_quat=np.array(quat),
        )

    @classmethod
    def from_clip(cls, model: RobotModel, clip: MotionClip) -> "ReferenceTrajectory":
        """Rebuild a reference from a clip whose ``joint_pos`` is populated."""
        qs = clip.joint_array()
        if qs is None:
            raise ValueError(f"clip {clip.id!r} has no joint positions")
        if qs.shape[1] != model.n:
            raise ValueError(f"clip has {qs.shape[1]} joints, model has {model.n}")
        roots = [f.root for f in clip.frames]
        return cls.from_states(model, clip.fps, clip.times, roots, qs)


def retarget_clip(model: RobotModel, clip: MotionClip, config: RetargetConfig, q_init=None) -> ReferenceTrajectory:
    """Retarget every frame in order, warm-starting each IK from the previous result."""
    config.validate(model, clip.num_keypoints)
    dt = 1.0 / clip.fps
    q = np.zeros(model.n) if q_init is None else np.asarray(q_init, dtype=float)
    q = np.clip(q, model.lower, model.upper)
    roots, qs = [], []
    for k, frame in enumerate(clip.frames):
        root = reference_root(frame.root)
        extra = config.settle_iterations if k == 0 and config.settle_iterations > 0 else None
        q = retarget_frame(model, q, root, frame, config, dt, iterations=extra)
        roots.append(root)
        qs.append(q)
    return ReferenceTrajectory.from_states(model, clip.fps, clip.times, roots, qs)
