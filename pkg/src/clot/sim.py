"""Desk-scale plant: independent second-order joints plus a kinematically
driven floating root, with domain randomization, pushes, actuation delay,
random force injection (RFI), contact proxies and termination checks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .kinematics import RobotModel
from .models import HUMANOID_DYNAMICS, joint_group
from .transforms import quat_from_axis_angle, quat_mul, quat_normalize

PHYSICS_DT = 1.0 / 400.0
RFI_BASE_FRACTION = 0.01


@dataclass(frozen=True)
class JointDynamics:
    inertia: np.ndarray
    damping: np.ndarray
    friction: np.ndarray
    torque_limit: np.ndarray
    rfi_amplitude: np.ndarray | None = None
    # e-folding time of pushed root velocity; inf keeps it forever
    push_decay: float = 0.5

    def __post_init__(self):
        for name in ("inertia", "damping", "friction", "torque_limit"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.inertia)
        if self.rfi_amplitude is None:
            object.__setattr__(self, "rfi_amplitude", np.zeros(n))
        else:
            object.__setattr__(self, "rfi_amplitude", np.asarray(self.rfi_amplitude, dtype=float))
        if np.any(self.inertia <= 0) or not np.all(np.isfinite(self.inertia)):
            raise ValueError("joint inertia must be finite and > 0")
        if np.any(self.damping < 0) or np.any(self.friction < 0):
            raise ValueError("damping and friction must be >= 0")
        for name in ("damping", "friction", "torque_limit", "rfi_amplitude"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have length {n}")

    @property
    def n(self) -> int:
        return len(self.inertia)

    @classmethod
    def uniform(cls, model: RobotModel, inertia=0.05, damping=0.0, friction=0.0, **kw) -> "JointDynamics":
        n = model.n
        return cls(np.full(n, inertia), np.full(n, damping), np.full(n, friction), model.torque_limit.copy(), **kw)

    @classmethod
    def for_model(cls, model: RobotModel) -> "JointDynamics":
        """Shipped humanoid parameters by joint group, generic values otherwise."""
        rows = [HUMANOID_DYNAMICS.get(joint_group(name), (0.05, 0.02, 0.01)) for name in model.joint_names]
        arr = np.array(rows)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], model.torque_limit.copy())

    @classmethod
    def from_dict(cls, doc: dict, model: RobotModel) -> "JointDynamics":
        base = cls.for_model(model)
        default = doc.get("default", {})
        per_joint = doc.get("joints", {})
        unknown = set(per_joint) - set(model.joint_names)
        if unknown:
            raise ValueError(f"dynamics config names unknown joints: {sorted(unknown)}")
        vals = {k: getattr(base, k).copy() for k in ("inertia", "damping", "friction")}
        for i, name in enumerate(model.joint_names):
            for key in vals:
                if key in default:
                    vals[key][i] = float(default[key])
                if key in per_joint.get(name, {}):
                    vals[key][i] = float(per_joint[name][key])
        return cls(vals["inertia"], vals["damping"], vals["friction"], model.torque_limit.copy(),
                   push_decay=float(doc.get("push_decay", base.push_decay)))


@dataclass
class SimState:
    q: np.ndarray
    qd: np.ndarray
    tau: np.ndarray  # last applied torque
    root_pos: np.ndarray
    root_quat: np.ndarray
    root_cmd_lin_vel: np.ndarray
    root_cmd_ang_vel: np.ndarray
    push_vel: np.ndarray
    delay_fifo: tuple[np.ndarray, ...] = ()
    time: float = 0.0
    tick: int = 0
    contacts: tuple[bool, ...] = ()
    contact_normal: np.ndarray = field(default_factory=lambda: np.zeros(0))
    contact_lateral: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def root_lin_vel(self) -> np.ndarray:
        return self.root_cmd_lin_vel + self.push_vel

    @property
    def root_ang_vel(self) -> np.ndarray:
        return self.root_cmd_ang_vel

    @property
    def delay(self) -> int:
        return len(self.delay_fifo)

    def copy(self) -> "SimState":
        return replace(
            self,
            q=self.q.copy(), qd=self.qd.copy(), tau=self.tau.copy(), root_pos=self.root_pos.copy(),
            root_quat=self.root_quat.copy(), root_cmd_lin_vel=self.root_cmd_lin_vel.copy(),
            root_cmd_ang_vel=self.root_cmd_ang_vel.copy(), push_vel=self.push_vel.copy(),
            contact_normal=self.contact_normal.copy(), contact_lateral=self.contact_lateral.copy(),
        )


def initial_state(q0, root_pos=(0, 0, 0), root_quat=(1, 0, 0, 0), delay: int = 0, qd0=None) -> SimState:
    q0 = np.asarray(q0, dtype=float).copy()
    n = len(q0)
    if delay < 0:
        raise ValueError("delay must be >= 0")
    return SimState(
        q=q0,
        qd=np.zeros(n) if qd0 is None else np.asarray(qd0, dtype=float).copy(),
        tau=np.zeros(n),
        root_pos=np.asarray(root_pos, dtype=float).copy(),
        root_quat=np.asarray(root_quat, dtype=float).copy(),
        root_cmd_lin_vel=np.zeros(3),
        root_cmd_ang_vel=np.zeros(3),
        push_vel=np.zeros(3),
        delay_fifo=tuple(np.zeros(n) for _ in range(delay)),
    )


def kinetic_energy(state: SimState, dynamics: JointDynamics) -> float:
    return float(0.5 * np.sum(dynamics.inertia * state.qd**2))


def step(state: SimState, tau_cmd, dynamics: JointDynamics, dt: float = PHYSICS_DT,
         rng: np.random.Generator | None = None, pos_limits: tuple[np.ndarray, np.ndarray] | None = None) -> SimState:
    """Advance the plant by one physics tick.

    The command enters the delay FIFO; the command leaving it gets RFI noise
    and is clamped to the torque limit. Joints integrate semi-implicitly
    (velocity first, viscous damping implicit, dry friction never reverses
    the velocity). The root moves with its commanded velocity plus any push.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    tau_cmd = np.asarray(tau_cmd, dtype=float)
    if tau_cmd.shape != state.q.shape:
        raise ValueError(f"torque has shape {tau_cmd.shape}, expected {state.q.shape}")
    if not np.all(np.isfinite(tau_cmd)):
        raise ValueError("NaN torque command")

    if state.delay_fifo:
        fifo = state.delay_fifo[1:] + (tau_cmd.copy(),)
        applied = state.delay_fifo[0]
    else:
        fifo = ()
        applied = tau_cmd
    if rng is not None and np.any(dynamics.rfi_amplitude > 0):
        applied = applied + rng.uniform(-1.0, 1.0, len(applied)) * dynamics.rfi_amplitude
    limit = dynamics.torque_limit
    tau = np.clip(applied, -limit, limit)

    inv_i = dt / dynamics.inertia
    qd = (state.qd + inv_i * tau) / (1.0 + inv_i * dynamics.damping)
    slip = inv_i * dynamics.friction
    qd = np.sign(qd) * np.maximum(np.abs(qd) - slip, 0.0)
    q = state.q + dt * qd
    if pos_limits is not None:
        lo, hi = pos_limits
        hit = (q < lo) | (q > hi)
        if hit.any():
            q = np.clip(q, lo, hi)
            qd = np.where(hit, 0.0, qd)

    lin = state.root_cmd_lin_vel + state.push_vel
    root_pos = state.root_pos + dt * lin
    ang = state.root_cmd_ang_vel
    angle = float(np.linalg.norm(ang)) * dt
    if angle > 0.0:
        dq = quat_from_axis_angle(ang / np.linalg.norm(ang), angle)
        root_quat = quat_normalize(quat_mul(dq, state.root_quat))
    else:
        root_quat = state.root_quat.copy()
    push = state.push_vel
    if np.any(push) and math.isfinite(dynamics.push_decay):
        push = push * math.exp(-dt / dynamics.push_decay) if dynamics.push_decay > 0 else np.zeros(3)

    return replace(
        state, q=q, qd=qd, tau=tau, root_pos=root_pos, root_quat=root_quat, push_vel=push,
        delay_fifo=fifo, time=state.time + dt, tick=state.tick + 1,
    )


def set_root_command(state: SimState, lin_vel, ang_vel) -> SimState:
    return replace(state, root_cmd_lin_vel=np.asarray(lin_vel, dtype=float).copy(),
                   root_cmd_ang_vel=np.asarray(ang_vel, dtype=float).copy())


# -- domain randomization -------------------------------------------------------


@dataclass(frozen=True)
class DomainRandConfig:
    base_com: tuple[float, float] = (-0.08, 0.08)
    link_com: tuple[float, float] = (-0.02, 0.02)
    link_mass_scale: tuple[float, float] = (0.90, 1.10)
    link_inertia_scale: tuple[float, float] = (0.85, 1.15)
    pd_gain_scale: tuple[float, float] = (0.90, 1.10)
    friction_scale: tuple[float, float] = (0.80, 1.50)
    push_velocity_xy: tuple[float, float] = (-0.20, 0.20)
    push_interval: tuple[float, float] = (3.0, 6.0)
    rfi_limit_scale: tuple[float, float] = (0.50, 1.50)
    control_delay: tuple[int, int] = (0, 2)

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
        if self.push_interval[0] <= 0:
            raise ValueError("push interval must be positive")

    @classmethod
    def disabled(cls) -> "DomainRandConfig":
        """Nominal plant: unit scales, zero offsets, no pushes, noise or delay."""
        return cls(
            base_com=(0.0, 0.0), link_com=(0.0, 0.0), link_mass_scale=(1.0, 1.0),
            link_inertia_scale=(1.0, 1.0), pd_gain_scale=(1.0, 1.0), friction_scale=(1.0, 1.0),
            push_velocity_xy=(0.0, 0.0), push_interval=(3.0, 6.0), rfi_limit_scale=(0.0, 0.0),
            control_delay=(0, 0),
        )

    def to_dict(self) -> dict:
        return {name: list(getattr(self, name)) for name in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, doc: dict) -> "DomainRandConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown randomization fields: {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in doc.items()})


@dataclass(frozen=True)
class RandomizedParams:
    base_com: np.ndarray  # (3,)
    link_com: np.ndarray  # (n, 3)
    link_mass_scale: np.ndarray
    link_inertia_scale: np.ndarray
    kp_scale: np.ndarray
    kd_scale: np.ndarray
    friction_scale: np.ndarray
    rfi_scale: float
    delay: int

    @classmethod
    def nominal(cls, n: int) -> "RandomizedParams":
        ones = np.ones(n)
        return cls(np.zeros(3), np.zeros((n, 3)), ones, ones, ones, ones, ones, 0.0, 0)

    def privileged_vector(self) -> np.ndarray:
        """Deviation from nominal; all zeros for an unrandomized episode."""
        return np.concatenate([
            self.base_com, self.link_com.ravel(), self.link_mass_scale - 1, self.link_inertia_scale - 1,
            self.kp_scale - 1, self.kd_scale - 1, self.friction_scale - 1, [self.rfi_scale, float(self.delay)],
        ])

    @staticmethod
    def privileged_size(n: int) -> int:
        return 3 + 3 * n + 5 * n + 2


def sample_randomization(config: DomainRandConfig, n: int, rng: np.random.Generator) -> RandomizedParams:
    """Every parameter drawn independently and uniformly from its range."""
    def u(rng_range, size=None):
        lo, hi = rng_range
        if lo == hi:
            return np.full(size, float(lo)) if size is not None else float(lo)
        return rng.uniform(lo, hi, size)

    return RandomizedParams(
        base_com=u(config.base_com, 3),
        link_com=u(config.link_com, (n, 3)),
        link_mass_scale=u(config.link_mass_scale, n),
        link_inertia_scale=u(config.link_inertia_scale, n),
        kp_scale=u(config.pd_gain_scale, n),
        kd_scale=u(config.pd_gain_scale, n),
        friction_scale=u(config.friction_scale, n),
        rfi_scale=float(u(config.rfi_limit_scale)),
        delay=int(rng.integers(config.control_delay[0], config.control_delay[1] + 1))
        if config.control_delay[0] != config.control_delay[1] else int(config.control_delay[0]),
    )


def randomized_dynamics(base: JointDynamics, params: RandomizedParams) -> JointDynamics:
    """Apply the mass/inertia, friction and RFI draws to the joint plant.

    CoM offsets have no joint-space effect in this plant and are only
    carried for the critic.
    """
    return replace(
        base,
        inertia=base.inertia * params.link_mass_scale * params.link_inertia_scale,
        friction=base.friction * params.friction_scale,
        rfi_amplitude=params.rfi_scale * RFI_BASE_FRACTION * base.torque_limit,
    )


class PushSchedule:
    """Random root-velocity kicks at random intervals."""

    def __init__(self, velocity_range=(-0.2, 0.2), interval_range=(3.0, 6.0), rng=None, start: float = 0.0):
        if interval_range[0] <= 0 or interval_range[0] > interval_range[1]:
            raise ValueError("invalid push interval range")
        self.velocity_range = tuple(velocity_range)
        self.interval_range = tuple(interval_range)
        self.history: list[tuple[float, np.ndarray]] = []
        self.next_time = start + self._interval(rng) if rng is not None else start + interval_range[0]

    def _interval(self, rng) -> float:
        lo, hi = self.interval_range
        return lo if lo == hi else float(rng.uniform(lo, hi))

    def draw(self, rng) -> np.ndarray:
        lo, hi = self.velocity_range
        xy = np.zeros(2) if lo == hi == 0 else rng.uniform(lo, hi, 2)
        return np.array([xy[0], xy[1], 0.0])


def apply_push(state: SimState, schedule: PushSchedule, rng: np.random.Generator) -> SimState:
    """Kick the root if a push is due and schedule the next one."""
    if state.time + 1e-12 < schedule.next_time:
        return state
    push = schedule.draw(rng)
    schedule.history.append((state.time, push))
    schedule.next_time += schedule._interval(rng)
    return replace(state, push_vel=state.push_vel + push)


def inject_push(state: SimState, push) -> SimState:
    return replace(state, push_vel=state.push_vel + np.asarray(push, dtype=float))


# -- contacts and termination ---------------------------------------------------


@dataclass(frozen=True)
class ContactConfig:
    height_threshold: float = 0.02
    stiffness: float = 2.0e4  # N per m below the threshold height
    lateral_gain: float = 200.0  # N per m/s of sliding
    collision_height: float = -0.02


def contact_proxies(foot_pos: np.ndarray, foot_vel: np.ndarray, cfg: ContactConfig = ContactConfig()):
    """Contact flags, normal and lateral force proxies from foot kinematics."""
    z = foot_pos[:, 2]
    flags = z < cfg.height_threshold
    normal = cfg.stiffness * np.maximum(cfg.height_threshold - z, 0.0)
    lateral = np.where(flags, cfg.lateral_gain * np.linalg.norm(foot_vel[:, :2], axis=1), 0.0)
    return tuple(bool(f) for f in flags), normal, lateral


def update_contacts(state: SimState, foot_pos, foot_vel, cfg: ContactConfig = ContactConfig()) -> SimState:
    flags, normal, lateral = contact_proxies(np.asarray(foot_pos), np.asarray(foot_vel), cfg)
    return replace(state, contacts=flags, contact_normal=normal, contact_lateral=lateral)


def detect_collision(body_pos: np.ndarray, exclude, cfg: ContactConfig = ContactConfig()) -> bool:
    """Any non-foot body below the collision height counts as a collision."""
    mask = np.ones(len(body_pos), dtype=bool)
    mask[list(exclude)] = False
    return bool(np.any(body_pos[mask, 2] < cfg.collision_height))


@dataclass(frozen=True)
class TerminationThresholds:
    distance: float = 2.5
    scale: float = 0.8
    # mean body error bound before scaling, m
    body_error: float = 0.25

    @classmethod
    def from_curriculum(cls, curriculum, body_error: float = 0.25) -> "TerminationThresholds":
        return cls(curriculum.current("termination_distance"), curriculum.current("termination_scale"), body_error)


@dataclass(frozen=True)
class Termination:
    terminated: bool
    reason: str | None = None

    @property
    def early(self) -> bool:
        return self.terminated and self.reason != "clip_end"

    def to_dict(self) -> dict:
        return {"terminated": self.terminated, "reason": self.reason, "early": self.early}


CONTINUE = Termination(False)


def check_termination(root_pos, body_pos, ref_root_pos, ref_body_pos,
                      thresholds: TerminationThresholds = TerminationThresholds(),
                      clip_end: bool = False) -> Termination:
    root_err = float(np.linalg.norm(np.asarray(root_pos) - np.asarray(ref_root_pos)))
    if root_err > thresholds.distance:
        return Termination(True, "distance")
    body_err = float(np.linalg.norm(np.asarray(body_pos) - np.asarray(ref_body_pos), axis=-1).mean())
    if body_err > thresholds.scale * thresholds.body_error:
        return Termination(True, "body_error")
    if clip_end:
        return Termination(True, "clip_end")
    return CONTINUE


def load_sim_config(path, model: RobotModel) -> tuple[JointDynamics, DomainRandConfig | None]:
    doc = json.loads(Path(path).read_text())
    dyn = JointDynamics.from_dict(doc.get("dynamics", {}), model)
    rand = doc.get("randomization")
    return dyn, (DomainRandConfig.from_dict(rand) if rand is not None else None)
