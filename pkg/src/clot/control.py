"""Joint-space PD control with torque clamping."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kinematics import JointState, RobotModel
from .models import ADAM_PRO_GAINS, joint_group


@dataclass(frozen=True)
class PDGains:
    kp: np.ndarray
    kd: np.ndarray

    def __post_init__(self):
        kp = np.asarray(self.kp, dtype=float)
        kd = np.asarray(self.kd, dtype=float)
        if kp.shape != kd.shape or kp.ndim != 1:
            raise ValueError("kp and kd must be vectors of equal length")
        if np.any(kp < 0) or np.any(kd < 0):
            raise ValueError("PD gains must be >= 0")
        object.__setattr__(self, "kp", kp)
        object.__setattr__(self, "kd", kd)

    def scaled(self, kp_scale, kd_scale) -> "PDGains":
        return PDGains(self.kp * kp_scale, self.kd * kd_scale)


@dataclass(frozen=True)
class PDCommand:
    q_target: np.ndarray
    qd_target: np.ndarray

    @classmethod
    def position(cls, q_target) -> "PDCommand":
        """Position-only target; velocity target defaults to zero."""
        q_target = np.asarray(q_target, dtype=float)
        return cls(q_target, np.zeros_like(q_target))


def pd_torque(cmd: PDCommand, state: JointState, gains: PDGains) -> np.ndarray:
    """tau = Kp (q* - q) + Kd (qd* - qd), unclamped."""
    n = len(gains.kp)
    for name, arr in (("q_target", cmd.q_target), ("qd_target", cmd.qd_target), ("q", state.q), ("qd", state.qd)):
        if np.shape(arr) != (n,):
            raise ValueError(f"{name} has shape {np.shape(arr)}, expected ({n},)")
    return gains.kp * (cmd.q_target - state.q) + gains.kd * (cmd.qd_target - state.qd)


def clamp_torque(tau, limit) -> tuple[np.ndarray, np.ndarray]:
    """Clamp to +/- limit; returns the clamped torque and per-joint overshoot."""
    if isinstance(limit, RobotModel):
        limit = limit.torque_limit
    tau = np.asarray(tau, dtype=float)
    limit = np.asarray(limit, dtype=float)
    clamped = np.clip(tau, -limit, limit)
    return clamped, np.abs(tau - clamped)


def gains_from_profile(model: RobotModel, profile: dict[str, tuple[float, float]], by_group: bool = False) -> PDGains:
    """Build gains from a ``{joint name: [kp, kd]}`` mapping.

    Every model joint must be present and every key must name a model joint;
    with ``by_group`` keys are left/right-agnostic joint groups.
    """
    keys = [joint_group(n) if by_group else n for n in model.joint_names]
    missing = sorted(set(keys) - set(profile))
    unknown = sorted(set(profile) - set(keys))
    if missing:
        raise ValueError(f"gain profile lacks joints: {missing}")
    if unknown and not by_group:
        raise ValueError(f"gain profile names unknown joints: {unknown}")
    kp = [float(profile[k][0]) for k in keys]
    kd = [float(profile[k][1]) for k in keys]
    return PDGains(np.array(kp), np.array(kd))


def adam_pro_gains(model: RobotModel) -> PDGains:
    return gains_from_profile(model, ADAM_PRO_GAINS, by_group=True)


def load_gains(path, model: RobotModel) -> PDGains:
    doc = json.loads(Path(path).read_text())
    return gains_from_profile(model, doc)


def default_gains(model: RobotModel) -> PDGains:
    """Adam Pro gains for humanoid joint names, otherwise a mild generic profile."""
    try:
        return adam_pro_gains(model)
    except ValueError:
        return PDGains(np.full(model.n, 40.0), np.full(model.n, 1.0))
