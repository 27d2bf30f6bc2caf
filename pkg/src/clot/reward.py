"""Motion-tracking reward terms with exponential tracking kernels and
adaptive tolerances."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .transforms import quat_angle, quat_conj, quat_mul

# (name, default weight); positive rewards first, then penalties
REWARD_TERMS: tuple[tuple[str, float], ...] = (
    ("contact_consistency", 0.5),
    ("joint_limit_satisfaction", 1.0),
    ("body_position", 1.2),
    ("vr_keypoint", 1.6),
    ("feet_position", 1.5),
    ("body_orientation", 1.5),
    ("body_ang_vel", 0.6),
    ("body_lin_vel", 0.6),
    ("joint_position", 1.0),
    ("joint_velocity", 1.0),
    ("feet_air_time", 160.0),
    ("alive", 0.2),
    ("feet_height_deviation", -20.0),
    ("torque_limit_violation", -1.0e-4),
    ("action_rate", -0.1),
    ("action_smoothness", -0.2),
    ("feet_contact_force", -5.0e-4),
    ("stumbling", -20.0),
    ("feet_slippage", -2.0),
    ("joint_position_limit", -10.0),
    ("joint_velocity_limit", -10.0),
    ("torque_limit", -10.0),
    ("collision", -30.0),
    ("early_termination", -200.0),
)
TERM_NAMES = tuple(name for name, _ in REWARD_TERMS)

# human-readable labels used in JSON configs
TERM_LABELS = {
    "contact_consistency": "Contact Consistency Tracking",
    "joint_limit_satisfaction": "Joint Limit Satisfaction Reward",
    "body_position": "Extended Body Position Tracking",
    "vr_keypoint": "VR Keypoint (3-Point) Tracking",
    "feet_position": "Feet Position Tracking",
    "body_orientation": "Extended Body Orientation Tracking",
    "body_ang_vel": "Extended Body Angular Velocity Tracking",
    "body_lin_vel": "Extended Body Linear Velocity Tracking",
    "joint_position": "Joint Position Tracking",
    "joint_velocity": "Joint Velocity Tracking",
    "feet_air_time": "Feet Air-Time Reward",
    "alive": "Alive Bonus",
    "feet_height_deviation": "Feet Height Deviation Penalty",
    "torque_limit_violation": "Torque Limit Violation Penalty",
    "action_rate": "Action Rate Penalty",
    "action_smoothness": "Action Smoothness Penalty",
    "feet_contact_force": "Feet Contact Force Penalty",
    "stumbling": "Stumbling Penalty",
    "feet_slippage": "Feet Slippage Penalty",
    "joint_position_limit": "Joint Position Limit Penalty",
    "joint_velocity_limit": "Joint Velocity Limit Penalty",
    "torque_limit": "Torque Limit Penalty",
    "collision": "Collision Penalty",
    "early_termination": "Early Termination Penalty",
}
_LABEL_TO_NAME = {v: k for k, v in TERM_LABELS.items()}

# terms scored through the exponential kernel, with (initial sigma, lo, hi)
KERNEL_TERMS: dict[str, tuple[float, float, float]] = {
    "contact_consistency": (0.25, 0.01, 1.0),
    "joint_limit_satisfaction": (0.05, 0.005, 0.5),
    "body_position": (0.02, 0.001, 0.5),
    "vr_keypoint": (0.02, 0.001, 0.5),
    "feet_position": (0.02, 0.001, 0.5),
    "body_orientation": (0.2, 0.01, 2.0),
    "body_ang_vel": (4.0, 0.1, 40.0),
    "body_lin_vel": (0.5, 0.01, 5.0),
    "joint_position": (0.1, 0.005, 1.0),
    "joint_velocity": (4.0, 0.1, 40.0),
}


def tracking_kernel(err, sigma) -> float:
    """exp(-err / sigma), in (0, 1] for err >= 0."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if err < 0:
        raise ValueError(f"tracking error must be >= 0, got {err}")
    return math.exp(-err / sigma)


@dataclass(frozen=True)
class RewardConfig:
    weights: dict[str, float] = field(default_factory=lambda: dict(REWARD_TERMS))
    # per-foot height tolerance before the deviation penalty (m)
    feet_height_tol: float = 0.05
    air_time_min: float = 0.2
    contact_force_max: float = 350.0
    # lateral/vertical contact force ratio counted as a stumble
    stumble_ratio: float = 2.0
    vr_frames: tuple[int, ...] = ()
    foot_frames: tuple[int, ...] = ()

    def __post_init__(self):
        w = dict(self.weights)
        unknown = set(w) - set(TERM_NAMES)
        if unknown:
            raise ValueError(f"unknown reward terms: {sorted(unknown)}")
        full = dict(REWARD_TERMS)
        full.update({k: float(v) for k, v in w.items()})
        for name, default in REWARD_TERMS:
            if default > 0 and full[name] < 0:
                raise ValueError(f"{name}: positive-reward weight must be >= 0")
            if default < 0 and full[name] > 0:
                raise ValueError(f"{name}: penalty weight must be <= 0")
        object.__setattr__(self, "weights", full)
        object.__setattr__(self, "vr_frames", tuple(int(i) for i in self.vr_frames))
        object.__setattr__(self, "foot_frames", tuple(int(i) for i in self.foot_frames))

    @classmethod
    def for_model(cls, model, **kwargs) -> "RewardConfig":
        """Head and wrists as the three VR points, feet by frame name."""
        names = model.frame_names
        vr = [names.index(n) for n in ("head", "left_wrist", "right_wrist") if n in names]
        feet = [names.index(n) for n in ("left_foot", "right_foot") if n in names]
        return cls(vr_frames=tuple(kwargs.pop("vr_frames", vr)), foot_frames=tuple(kwargs.pop("foot_frames", feet)),
                   **kwargs)

    def to_dict(self) -> dict:
        return {
            "weights": {TERM_LABELS[k]: self.weights[k] for k in TERM_NAMES},
            "feet_height_tol": self.feet_height_tol,
            "air_time_min": self.air_time_min,
            "contact_force_max": self.contact_force_max,
            "stumble_ratio": self.stumble_ratio,
            "vr_frames": list(self.vr_frames),
            "foot_frames": list(self.foot_frames),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RewardConfig":
        weights = {}
        for key, value in doc.get("weights", {}).items():
            name = _LABEL_TO_NAME.get(key, key)
            if name not in TERM_NAMES:
                raise ValueError(f"unknown reward term {key!r}")
            weights[name] = float(value)
        kw = {k: doc[k] for k in ("feet_height_tol", "air_time_min", "contact_force_max", "stumble_ratio") if k in doc}
        return cls(weights=weights, vr_frames=tuple(doc.get("vr_frames", ())),
                   foot_frames=tuple(doc.get("foot_frames", ())), **kw)


def load_reward_config(path) -> RewardConfig:
    return RewardConfig.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class SigmaState:
    sigma: dict[str, float]
    rate: float
    bounds: dict[str, tuple[float, float]]

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("sigma EMA rate must be in [0, 1]")
        for name, s in self.sigma.items():
            lo, hi = self.bounds[name]
            if not 0 < lo <= hi:
                raise ValueError(f"{name}: invalid sigma bounds")
            if not lo <= s <= hi:
                raise ValueError(f"{name}: sigma {s} outside [{lo}, {hi}]")

    @classmethod
    def default(cls, rate: float = 1e-3) -> "SigmaState":
        return cls({k: v[0] for k, v in KERNEL_TERMS.items()}, rate, {k: (v[1], v[2]) for k, v in KERNEL_TERMS.items()})

    def __getitem__(self, name: str) -> float:
        return self.sigma[name]


def update_sigma(state: SigmaState, observed_err) -> SigmaState:
    """sigma <- clamp((1 - rate) sigma + rate err, lo, hi) per observed term.

    ``observed_err`` maps term names to errors; a bare number updates every term.
    """
    if not isinstance(observed_err, dict):
        observed_err = {name: float(observed_err) for name in state.sigma}
    a = state.rate
    new = dict(state.sigma)
    for name, err in observed_err.items():
        if name not in new:
            continue
        if err < 0:
            raise ValueError(f"{name}: observed error must be >= 0")
        lo, hi = state.bounds[name]
        new[name] = min(max((1.0 - a) * new[name] + a * float(err), lo), hi)
    return replace(state, sigma=new)


@dataclass
class RewardInputs:
    """One control step of robot and reference quantities.

    Body arrays are (N_b, 3) / (N_b, 4); foot arrays are (n_feet, 3).
    """

    body_pos: np.ndarray
    body_quat: np.ndarray
    body_lin_vel: np.ndarray
    body_ang_vel: np.ndarray
    ref_body_pos: np.ndarray
    ref_body_quat: np.ndarray
    ref_body_lin_vel: np.ndarray
    ref_body_ang_vel: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    ref_q: np.ndarray
    ref_qd: np.ndarray
    tau: np.ndarray  # commanded torque before clamping
    action: np.ndarray
    prev_action: np.ndarray
    prev_prev_action: np.ndarray
    foot_vel: np.ndarray | None = None
    contacts: np.ndarray | None = None
    ref_contacts: np.ndarray | None = None
    contact_normal: np.ndarray | None = None
    contact_lateral: np.ndarray | None = None
    air_time_at_touchdown: np.ndarray | None = None
    collision: bool = False
    terminated_early: bool = False


@dataclass(frozen=True)
class JointLimits:
    lower: np.ndarray
    upper: np.ndarray
    vel: np.ndarray
    torque: np.ndarray

    @classmethod
    def from_model(cls, model) -> "JointLimits":
        return cls(model.lower, model.upper, model.vel_limit, model.torque_limit)


@dataclass(frozen=True)
class RewardBreakdown:
    raw: dict[str, float]
    weighted: dict[str, float]
    total: float
    errors: dict[str, float]

    def to_dict(self) -> dict:
        return {"raw": self.raw, "weighted": self.weighted, "total": self.total, "errors": self.errors}

    @staticmethod
    def csv_header() -> str:
        return ",".join(["step", *TERM_NAMES, "total"])

    def csv_row(self, step: int) -> str:
        return ",".join([str(step)] + [repr(self.weighted[k]) for k in TERM_NAMES] + [repr(self.total)])


def _mean_sq(a, b) -> float:
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(np.mean(np.sum(d * d, axis=-1))) if d.ndim > 1 else float(np.mean(d * d))


def _geodesic_sq(qa, qb) -> float:
    rel = quat_mul(quat_conj(np.asarray(qb)), np.asarray(qa))
    return float(np.mean(quat_angle(rel) ** 2))


def soft_limit_violation(x, lo, hi, fraction: float) -> np.ndarray:
    """Overshoot beyond the band centred in [lo, hi] covering ``fraction`` of it."""
    c = 0.5 * (lo + hi)
    r = 0.5 * (hi - lo) * fraction
    return np.maximum(x - (c + r), 0.0) + np.maximum((c - r) - x, 0.0)


def compute_rewards(
    inp: RewardInputs,
    config: RewardConfig,
    sigmas: SigmaState,
    limits: JointLimits,
    penalty_scale: float = 1.0,
    limit_fraction: float = 0.9,
) -> RewardBreakdown:
    """Every reward term for one step.

    Penalty weights are multiplied by ``penalty_scale``; joint and torque
    limit penalties activate beyond ``limit_fraction`` of each range.
    """
    if not 0 < limit_fraction <= 1:
        raise ValueError("limit_fraction must be in (0, 1]")
    if penalty_scale < 0:
        raise ValueError("penalty_scale must be >= 0")
    n = len(inp.q)
    for name in ("qd", "ref_q", "ref_qd", "tau", "action", "prev_action", "prev_prev_action"):
        if np.shape(getattr(inp, name)) != (n,):
            raise ValueError(f"{name} must have length {n}")
    if np.shape(inp.body_pos) != np.shape(inp.ref_body_pos):
        raise ValueError("robot and reference body arrays differ in shape")

    feet = list(config.foot_frames)
    vr = list(config.vr_frames)
    err: dict[str, float] = {}
    err["body_position"] = _mean_sq(inp.body_pos, inp.ref_body_pos)
    err["body_orientation"] = _geodesic_sq(inp.body_quat, inp.ref_body_quat)
    err["body_lin_vel"] = _mean_sq(inp.body_lin_vel, inp.ref_body_lin_vel)
    err["body_ang_vel"] = _mean_sq(inp.body_ang_vel, inp.ref_body_ang_vel)
    err["vr_keypoint"] = _mean_sq(inp.body_pos[vr], inp.ref_body_pos[vr]) if vr else 0.0
    err["feet_position"] = _mean_sq(inp.body_pos[feet], inp.ref_body_pos[feet]) if feet else 0.0
    err["joint_position"] = _mean_sq(inp.q, inp.ref_q)
    err["joint_velocity"] = _mean_sq(inp.qd, inp.ref_qd)
    if inp.contacts is not None and inp.ref_contacts is not None and len(inp.contacts):
        err["contact_consistency"] = float(np.mean(np.asarray(inp.contacts) != np.asarray(inp.ref_contacts)))
    else:
        err["contact_consistency"] = 0.0
    half_range = np.maximum(0.5 * (limits.upper - limits.lower), 1e-12)
    pos_viol = soft_limit_violation(inp.q, limits.lower, limits.upper, limit_fraction)
    err["joint_limit_satisfaction"] = float(np.mean(pos_viol / half_range))

    raw: dict[str, float] = {}
    for name in KERNEL_TERMS:
        raw[name] = tracking_kernel(err[name], sigmas[name])

    if inp.air_time_at_touchdown is not None:
        raw["feet_air_time"] = float(np.sum(np.maximum(np.asarray(inp.air_time_at_touchdown) - config.air_time_min, 0.0)))
    else:
        raw["feet_air_time"] = 0.0
    raw["alive"] = 0.0 if inp.terminated_early else 1.0

    if feet:
        dz = np.abs(inp.body_pos[feet, 2] - inp.ref_body_pos[feet, 2])
        raw["feet_height_deviation"] = float(np.sum(np.maximum(dz - config.feet_height_tol, 0.0)))
    else:
        raw["feet_height_deviation"] = 0.0
    tau = np.asarray(inp.tau, dtype=float)
    raw["torque_limit_violation"] = float(np.sum(tau * tau))
    da = np.asarray(inp.action) - np.asarray(inp.prev_action)
    raw["action_rate"] = float(da @ da)
    dda = np.asarray(inp.action) - 2.0 * np.asarray(inp.prev_action) + np.asarray(inp.prev_prev_action)
    raw["action_smoothness"] = float(dda @ dda)
    if inp.contact_normal is not None and len(inp.contact_normal):
        over = np.maximum(np.asarray(inp.contact_normal) - config.contact_force_max, 0.0)
        raw["feet_contact_force"] = float(np.sum(over * over))
        lateral = np.asarray(inp.contact_lateral if inp.contact_lateral is not None else np.zeros_like(over))
        stumble = (lateral > 0) & (lateral > config.stumble_ratio * np.asarray(inp.contact_normal))
        raw["stumbling"] = 1.0 if bool(np.any(stumble)) else 0.0
    else:
        raw["feet_contact_force"] = 0.0
        raw["stumbling"] = 0.0
    if inp.contacts is not None and inp.foot_vel is not None and len(inp.contacts):
        v = np.asarray(inp.foot_vel, dtype=float)[:, :2]
        raw["feet_slippage"] = float(np.sum(np.sum(v * v, axis=1) * np.asarray(inp.contacts, dtype=float)))
    else:
        raw["feet_slippage"] = 0.0
    raw["joint_position_limit"] = float(np.sum(pos_viol))
    raw["joint_velocity_limit"] = float(np.sum(np.maximum(np.abs(inp.qd) - limit_fraction * limits.vel, 0.0)))
    raw["torque_limit"] = float(np.sum(np.maximum(np.abs(tau) - limit_fraction * limits.torque, 0.0)))
    raw["collision"] = 1.0 if inp.collision else 0.0
    raw["early_termination"] = 1.0 if inp.terminated_early else 0.0

    weighted: dict[str, float] = {}
    for name in TERM_NAMES:
        w = config.weights[name]
        if w < 0:
            w *= penalty_scale
        weighted[name] = w * raw[name]
    raw = {k: raw[k] for k in TERM_NAMES}
    total = sum(weighted[k] for k in TERM_NAMES)
    return RewardBreakdown(raw, weighted, total, err)


class FeetAirTracker:
    """Per-foot time since lift-off; reports the accumulated air time on touchdown."""

    def __init__(self, n_feet: int):
        self.air_time = np.zeros(n_feet)
        self.in_contact = np.ones(n_feet, dtype=bool)

    def update(self, contacts, dt: float) -> np.ndarray:
        contacts = np.asarray(contacts, dtype=bool)
        touchdown = contacts & ~self.in_contact
        self.air_time = np.where(~contacts, self.air_time + dt, self.air_time)
        out = np.where(touchdown, self.air_time, 0.0)
        self.air_time = np.where(contacts, 0.0, self.air_time)
        self.in_contact = contacts
        return out
