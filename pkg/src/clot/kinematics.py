"""Kinematic chain model, forward kinematics, positional Jacobians and DLS IK."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from .transforms import (
    RigidTransform,
    axis_angle_matrices,
    matrix_to_quat,
    quat_to_matrix,
)

REVOLUTE = "revolute"
PRISMATIC = "prismatic"


class ModelError(ValueError):
    """Invalid robot model; ``field`` names the offending JSON path."""

    def __init__(self, field: str, message: str, line: int | None = None):
        self.field = field
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{field}: {message}")


class IKError(RuntimeError):
    pass


@dataclass(frozen=True)
class JointSpec:
    name: str
    parent: int
    joint_type: str
    axis: np.ndarray
    origin: RigidTransform
    pos_limits: tuple[float, float]
    vel_limit: float
    torque_limit: float

    def __post_init__(self):
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=float).reshape(3))
        object.__setattr__(self, "pos_limits", (float(self.pos_limits[0]), float(self.pos_limits[1])))


@dataclass(frozen=True)
class FrameSpec:
    name: str
    parent: int  # joint index, -1 for the floating root
    offset: RigidTransform = field(default_factory=RigidTransform.identity)


@dataclass(frozen=True)
class JointState:
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        qd = np.asarray(self.qd, dtype=float)
        if q.shape != qd.shape:
            raise ValueError("q and qd lengths differ")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise ValueError("joint state must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qd", qd)


@dataclass(frozen=True)
class IkTask:
    frame: int
    target_pos: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        w = float(self.weight)
        if not np.isfinite(w) or w < 0:
            raise ValueError(f"task weight must be finite and >= 0, got {self.weight}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "target_pos", np.asarray(self.target_pos, dtype=float).reshape(3))


class RobotModel:
    """Immutable tree of 1-DoF joints plus named frames attached to them.

    Joints are stored in topological order (a joint's parent index is lower
    than its own). Exactly one frame hangs off the floating root (parent -1)
    with an identity offset; that frame is the root frame.
    """

    def __init__(self, name: str, joints: Sequence[JointSpec], frames: Sequence[FrameSpec]):
        self.name = name
        self.joints = tuple(joints)
        self.frames = tuple(frames)
        self._validate()

        n = len(self.joints)
        self.joint_names = tuple(j.name for j in self.joints)
        self.frame_names = tuple(f.name for f in self.frames)
        self.parents = np.array([j.parent for j in self.joints], dtype=int)
        self.axes = np.array([j.axis for j in self.joints]).reshape(n, 3)
        self.revolute = np.array([j.joint_type == REVOLUTE for j in self.joints], dtype=bool)
        self.origin_rot = np.array([j.origin.matrix for j in self.joints]).reshape(n, 3, 3)
        self.origin_pos = np.array([j.origin.translation for j in self.joints]).reshape(n, 3)
        self.lower = np.array([j.pos_limits[0] for j in self.joints])
        self.upper = np.array([j.pos_limits[1] for j in self.joints])
        self.vel_limit = np.array([j.vel_limit for j in self.joints])
        self.torque_limit = np.array([j.torque_limit for j in self.joints])
        self.frame_parents = np.array([f.parent for f in self.frames], dtype=int)
        self.frame_rot = np.array([f.offset.matrix for f in self.frames]).reshape(-1, 3, 3)
        self.frame_pos = np.array([f.offset.translation for f in self.frames]).reshape(-1, 3)
        self.root_frame = int(np.flatnonzero(self.frame_parents == -1)[0])

        # ancestor[f, j]: joint j moves frame f
        joint_anc = np.zeros((n, n), dtype=bool)
        for j in range(n):
            p = self.parents[j]
            if p >= 0:
                joint_anc[j] = joint_anc[p]
            joint_anc[j, j] = True
        self.joint_ancestors = joint_anc
        self.frame_ancestors = np.zeros((len(self.frames), n), dtype=bool)
        for f, p in enumerate(self.frame_parents):
            if p >= 0:
                self.frame_ancestors[f] = joint_anc[p]
        for arr in (self.axes, self.origin_rot, self.origin_pos, self.lower, self.upper,
                    self.vel_limit, self.torque_limit, self.frame_rot, self.frame_pos,
                    self.parents, self.revolute, self.frame_parents,
                    self.joint_ancestors, self.frame_ancestors):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    def joint_index(self, name: str) -> int:
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise KeyError(f"unknown joint {name!r}") from None

    def frame_index(self, name: str) -> int:
        try:
            return self.frame_names.index(name)
        except ValueError:
            raise KeyError(f"unknown frame {name!r}") from None

    def _validate(self):
        if not self.joints:
            raise ModelError("joints", "model has no joints")
        for i, j in enumerate(self.joints):
            path = f"joints[{i}]"
            if j.joint_type not in (REVOLUTE, PRISMATIC):
                raise ModelError(f"{path}.type", f"unknown joint type {j.joint_type!r}")
            if not -1 <= j.parent < i:
                raise ModelError(f"{path}.parent", f"parent {j.parent} must be in [-1, {i - 1}]")
            if abs(np.linalg.norm(j.axis) - 1.0) > 1e-9:
                raise ModelError(f"{path}.axis", "axis must have unit norm")
            lo, hi = j.pos_limits
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise ModelError(f"{path}.limits.pos", f"invalid position limits {j.pos_limits}")
            if not j.vel_limit > 0:
                raise ModelError(f"{path}.limits.vel", "velocity limit must be > 0")
            if not j.torque_limit > 0:
                raise ModelError(f"{path}.limits.torque", "torque limit must be > 0")
        roots = 0
        for i, f in enumerate(self.frames):
            if not -1 <= f.parent < len(self.joints):
                raise ModelError(f"frames[{i}].parent", f"invalid joint index {f.parent}")
            if f.parent == -1:
                roots += 1
                if f.offset != RigidTransform.identity():
                    raise ModelError(f"frames[{i}].origin", "root frame must have identity offset")
        if roots != 1:
            raise ModelError("frames", f"expected exactly one root frame, found {roots}")

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        def tf(t: RigidTransform):
            return {"quat": t.rotation.tolist(), "pos": t.translation.tolist()}

        return {
            "name": self.name,
            "joints": [
                {
                    "name": j.name,
                    "parent": j.parent,
                    "type": j.joint_type,
                    "axis": j.axis.tolist(),
                    "origin": tf(j.origin),
                    "limits": {"pos": list(j.pos_limits), "vel": j.vel_limit, "torque": j.torque_limit},
                }
                for j in self.joints
            ],
            "frames": [{"name": f.name, "parent": f.parent, "origin": tf(f.offset)} for f in self.frames],
        }


def _get(d: dict, key: str, path: str):
    if not isinstance(d, dict) or key not in d:
        raise ModelError(f"{path}.{key}" if path else key, "missing field")
    return d[key]


def _vector(value, size: int, path: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ModelError(path, f"expected {size} numbers") from None
    if arr.shape != (size,) or not np.all(np.isfinite(arr)):
        raise ModelError(path, f"expected {size} finite numbers, got {value!r}")
    return arr


def _transform(d, path: str) -> RigidTransform:
    if d is None:
        return RigidTransform.identity()
    quat = _vector(d.get("quat", [1, 0, 0, 0]), 4, f"{path}.quat")
    pos = _vector(d.get("pos", [0, 0, 0]), 3, f"{path}.pos")
    try:
        return RigidTransform(quat, pos)
    except ValueError as exc:
        raise ModelError(f"{path}.quat", str(exc)) from None


def model_from_dict(doc: dict) -> RobotModel:
    if not isinstance(doc, dict):
        raise ModelError("", "model document must be a JSON object")
    name = str(doc.get("name", "robot"))
    joints_doc = _get(doc, "joints", "")
    frames_doc = _get(doc, "frames", "")
    joint_names: dict[str, int] = {}
    joints = []
    for i, jd in enumerate(joints_doc):
        path = f"joints[{i}]"
        jname = str(_get(jd, "name", path))
        parent = jd.get("parent", -1)
        if isinstance(parent, str):
            if parent not in joint_names:
                raise ModelError(f"{path}.parent", f"unknown parent joint {parent!r}")
            parent = joint_names[parent]
        elif parent is None:
            parent = -1
        limits = _get(jd, "limits", path)
        pos = _vector(_get(limits, "pos", f"{path}.limits"), 2, f"{path}.limits.pos")
        joints.append(
            JointSpec(
                name=jname,
                parent=int(parent),
                joint_type=str(_get(jd, "type", path)),
                axis=_vector(_get(jd, "axis", path), 3, f"{path}.axis"),
                origin=_transform(jd.get("origin"), f"{path}.origin"),
                pos_limits=(pos[0], pos[1]),
                vel_limit=float(_get(limits, "vel", f"{path}.limits")),
                torque_limit=float(_get(limits, "torque", f"{path}.limits")),
            )
        )
        joint_names[jname] = i
    frames = []
    for i, fd in enumerate(frames_doc):
        path = f"frames[{i}]"
        parent = fd.get("parent", -1)
        if isinstance(parent, str):
            if parent not in joint_names:
                raise ModelError(f"{path}.parent", f"unknown parent joint {parent!r}")
            parent = joint_names[parent]
        elif parent is None:
            parent = -1
        frames.append(FrameSpec(str(_get(fd, "name", path)), int(parent), _transform(fd.get("origin"), f"{path}.origin")))
    return RobotModel(name, joints, frames)


def load_model(path) -> RobotModel:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError("", exc.msg, line=exc.lineno) from None
    return model_from_dict(doc)


# -- kinematics ---------------------------------------------------------------


@dataclass
class KinematicsResult:
    """World-frame quantities of one FK evaluation."""

    joint_rot: np.ndarray  # (n, 3, 3) joint frame after motion
    joint_pos: np.ndarray  # (n, 3) joint frame origin
    joint_axis: np.ndarray  # (n, 3) world axis
    frame_rot: np.ndarray  # (F, 3, 3)
    frame_pos: np.ndarray  # (F, 3)


def _check_q(model: RobotModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n,):
        raise ValueError(f"expected q of length {model.n}, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("q must be finite")
    return q


def kinematics(model: RobotModel, root: RigidTransform, q) -> KinematicsResult:
    q = _check_q(model, q)
    n = model.n
    root_rot = root.matrix
    root_pos = root.translation
    motion = axis_angle_matrices(model.axes, np.where(model.revolute, q, 0.0))
    slide = np.where(model.revolute, 0.0, q)[:, None] * model.axes

    joint_rot = np.empty((n, 3, 3))
    joint_pos = np.empty((n, 3))
    joint_axis = np.empty((n, 3))
    for j in range(n):
        p = model.parents[j]
        if p < 0:
            prot, ppos = root_rot, root_pos
        else:
            prot, ppos = joint_rot[p], joint_pos[p]
        base_rot = prot @ model.origin_rot[j]
        base_pos = ppos + prot @ model.origin_pos[j]
        joint_axis[j] = base_rot @ model.axes[j]
        joint_pos[j] = base_pos + base_rot @ slide[j]
        joint_rot[j] = base_rot @ motion[j]

    parents = model.frame_parents
    prot = np.where((parents < 0)[:, None, None], root_rot, joint_rot[np.maximum(parents, 0)])
    ppos = np.where((parents < 0)[:, None], root_pos, joint_pos[np.maximum(parents, 0)])
    frame_rot = prot @ model.frame_rot
    frame_pos = ppos + np.einsum("fij,fj->fi", prot, model.frame_pos)
    return KinematicsResult(joint_rot, joint_pos, joint_axis, frame_rot, frame_pos)


def forward_kinematics(model: RobotModel, root: RigidTransform, q) -> list[RigidTransform]:
    """World pose of every model frame, in frame order."""
    kin = kinematics(model, root, q)
    out = []
    for f in range(model.num_frames):
        if f == model.root_frame:
            out.append(root)
        else:
            out.append(RigidTransform(matrix_to_quat(kin.frame_rot[f]), kin.frame_pos[f]))
    return out


def frame_positions(model: RobotModel, root: RigidTransform, q) -> np.ndarray:
    return kinematics(model, root, q).frame_pos


def jacobians_from(model: RobotModel, kin: KinematicsResult, frames=None) -> np.ndarray:
    """Positional Jacobians ``(len(frames), 3, n)`` from a precomputed FK result."""
    if frames is None:
        frames = np.arange(model.num_frames)
    frames = np.asarray(frames, dtype=int)
    pts = kin.frame_pos[frames]  # (k, 3)
    r = pts[:, None, :] - kin.joint_pos[None, :, :]  # (k, n, 3)
    rot_cols = np.cross(kin.joint_axis[None, :, :], r)
    cols = np.where(model.revolute[None, :, None], rot_cols, kin.joint_axis[None, :, :])
    cols = cols * model.frame_ancestors[frames][:, :, None]
    return np.transpose(cols, (0, 2, 1))


def frame_jacobian(model: RobotModel, root: RigidTransform, q, frame: int) -> np.ndarray:
    """3 x n matrix of d(frame position)/dq."""
    if not 0 <= frame < model.num_frames:
        raise IndexError(f"invalid frame index {frame}")
    kin = kinematics(model, root, q)
    return jacobians_from(model, kin, [frame])[0]


def solve_dls_ik(
    model: RobotModel,
    root: RigidTransform,
    q,
    tasks: Sequence[IkTask],
    lam: float,
    error_gain: float = 1.0,
) -> np.ndarray:
    """Joint velocity minimizing ``sum w_i |J_i v - e_i|^2 + lam |v|^2``.

    ``e_i = error_gain * (target_i - p_i(q))``. Solved through the normal
    equations with a Cholesky factorization.
    """
    if not lam >= 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    q = _check_q(model, q)
    n = model.n
    if not tasks:
        return np.zeros(n)
    for t in tasks:
        if not np.all(np.isfinite(t.target_pos)):
            raise ValueError("task target must be finite")
        if not 0 <= t.frame < model.num_frames:
            raise IndexError(f"invalid frame index {t.frame}")
    kin = kinematics(model, root, q)
    frames = [t.frame for t in tasks]
    jac = jacobians_from(model, kin, frames)
    w = np.array([t.weight for t in tasks])
    err = error_gain * (np.array([t.target_pos for t in tasks]) - kin.frame_pos[frames])

    hess = np.einsum("k,kai,kaj->ij", w, jac, jac) + lam * np.eye(n)
    grad = np.einsum("k,kai,ka->i", w, jac, err)
    if lam == 0:
        stacked = (np.sqrt(w)[:, None, None] * jac).reshape(-1, n)
        if np.linalg.matrix_rank(stacked) < n:
            raise IKError("singular IK system with lambda = 0")
    try:
        factor = scipy.linalg.cho_factor(hess)
    except np.linalg.LinAlgError as exc:
        raise IKError(f"IK normal equations not positive definite: {exc}") from None
    return scipy.linalg.cho_solve(factor, grad)


def integrate_and_clamp(q, v, dt: float, model: RobotModel) -> np.ndarray:
    """Clamp ``v`` to velocity limits, Euler-integrate, clamp to position limits."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    v = np.clip(np.asarray(v, dtype=float), -model.vel_limit, model.vel_limit)
    return np.clip(np.asarray(q, dtype=float) + v * dt, model.lower, model.upper)


def frame_quaternions(kin: KinematicsResult) -> np.ndarray:
    return np.array([matrix_to_quat(r) for r in kin.frame_rot])


__all__ = [
    "JointSpec",
    "FrameSpec",
    "JointState",
    "IkTask",
    "RobotModel",
    "ModelError",
    "IKError",
    "KinematicsResult",
    "RigidTransform",
    "kinematics",
    "forward_kinematics",
    "frame_positions",
    "frame_jacobian",
    "jacobians_from",
    "solve_dls_ik",
    "integrate_and_clamp",
    "frame_quaternions",
    "model_from_dict",
    "load_model",
    "quat_to_matrix",
]
