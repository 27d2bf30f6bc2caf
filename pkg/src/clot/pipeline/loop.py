"""Lockstep closed loop: mocap -> online retargeting -> policy -> PD -> plant,
with the robot's global root error fed back through the observation."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
from scipy.spatial.transform import Rotation

from ..control import PDCommand, PDGains, default_gains, pd_torque
from ..kinematics import JointState, RobotModel, frame_quaternions, kinematics
from ..metrics import MetricsReport, TrajectoryPair, compute_metrics
from ..motion_data import TIMESTAMP_TOL, MotionClip, MotionFrame, frame_at
from ..observation import ActorObservation, HistoryBuffer, ObservationLayout, ProprioState, assemble_actor_obs
from ..retarget import ReferenceTrajectory, RetargetConfig, reference_root, retarget_frame
from ..reward import (
    TERM_NAMES,
    FeetAirTracker,
    JointLimits,
    RewardBreakdown,
    RewardConfig,
    RewardInputs,
    SigmaState,
    compute_rewards,
)
from ..sim import (
    ContactConfig,
    DomainRandConfig,
    JointDynamics,
    PushSchedule,
    RandomizedParams,
    Termination,
    TerminationThresholds,
    apply_push,
    check_termination,
    contact_proxies,
    detect_collision,
    initial_state,
    randomized_dynamics,
    sample_randomization,
    set_root_command,
    step,
)
from ..transforms import RigidTransform, projected_gravity, quat_to_matrix, yaw_of
from .scheduler import CONTROL, MOCAP, PHYSICS, RateConfig, schedule

log = logging.getLogger(__name__)


class SourceExhausted(RuntimeError):
    pass


class PolicyError(RuntimeError):
    pass


# -- policy interface -----------------------------------------------------------


@dataclass(frozen=True)
class PolicyAction:
    """PD position targets, optional velocity targets and root velocity command."""

    q_target: np.ndarray
    qd_target: np.ndarray | None = None
    root_lin_vel: np.ndarray | None = None
    root_ang_vel: np.ndarray | None = None


@dataclass(frozen=True)
class ReferenceStep:
    """The reference at the current control tick."""

    q: np.ndarray
    qd: np.ndarray
    root: RigidTransform
    root_lin_vel: np.ndarray
    root_ang_vel: np.ndarray
    body_pos: np.ndarray


class Policy(Protocol):
    def __call__(self, obs: ActorObservation, reference: ReferenceStep) -> PolicyAction: ...


class ReferenceFollower:
    """Baseline policy: PD targets are the current reference joints.

    The root velocity command is the reference root velocity plus a term that
    cancels the observed global root error over ``horizon`` seconds.
    """

    def __init__(self, model: RobotModel, horizon: float = 0.02, velocity_targets: bool = True):
        self.lower, self.upper = model.lower, model.upper
        self.horizon = horizon
        self.velocity_targets = velocity_targets

    def __call__(self, obs: ActorObservation, reference: ReferenceStep) -> PolicyAction:
        return reference_follower_policy(obs, reference, self.lower, self.upper, self.horizon, self.velocity_targets)


def reference_follower_policy(obs: ActorObservation, reference: ReferenceStep, lower=None, upper=None,
                              horizon: float = 0.02, velocity_targets: bool = True) -> PolicyAction:
    q = np.asarray(reference.q, dtype=float)
    if lower is not None:
        q = np.clip(q, lower, upper)
    lin = np.asarray(reference.root_lin_vel, dtype=float)
    if "root_error" in obs.layout.slices:
        lin = lin - obs.block("root_error") / horizon
    return PolicyAction(q, np.asarray(reference.qd, dtype=float) if velocity_targets else None, lin,
                        np.asarray(reference.root_ang_vel, dtype=float))


# -- mocap sources --------------------------------------------------------------


class ClipSource:
    """Human frames from a clip, interpolated at the mocap tick time."""

    def __init__(self, clip: MotionClip):
        self.clip = clip
        self.t0 = float(clip.frames[0].t)

    @property
    def duration(self) -> float:
        return self.clip.duration

    def frame(self, t: float) -> MotionFrame:
        # the last frame stays valid for one frame period
        if t > self.clip.duration + TIMESTAMP_TOL:
            raise SourceExhausted(f"clip {self.clip.id!r} covers {self.clip.duration:.6f} s, asked for {t:.6f} s")
        return frame_at(self.clip, self.t0 + t)


class MailboxSource:
    """Latest frame received from a live stream; holds the last frame on dropout."""

    def __init__(self, mailbox, first_frame_timeout: float = 10.0):
        self.mailbox = mailbox
        self.timeout = first_frame_timeout
        self.last: MotionFrame | None = None
        self.held = 0

    duration = None

    def frame(self, t: float) -> MotionFrame:
        wire = self.mailbox.take(timeout=self.timeout if self.last is None else 0.0)
        if wire is not None:
            self.last = wire.to_motion()
        elif self.last is None:
            raise SourceExhausted("no mocap frame received")
        else:
            self.held += 1
        return self.last


# -- configuration ----------------------------------------------------------------


@dataclass
class LoopConfig:
    rates: RateConfig = field(default_factory=RateConfig)
    retarget: RetargetConfig | None = None
    gains: PDGains | None = None
    dynamics: JointDynamics | None = None
    reward: RewardConfig | None = None
    randomization: DomainRandConfig | None = None
    contact: ContactConfig = field(default_factory=ContactConfig)
    termination: TerminationThresholds = field(default_factory=TerminationThresholds)
    duration: float | None = None
    # "extrapolate" advances the PD position target along the velocity target
    # between control ticks; "hold" keeps it constant
    target_hold: str = "extrapolate"
    penalty_scale: float = 1.0
    limit_fraction: float = 0.9
    realtime: bool = False

    def resolved(self, model: RobotModel) -> "LoopConfig":
        out = LoopConfig(**self.__dict__)
        out.retarget = self.retarget or RetargetConfig.identity(model)
        out.gains = self.gains or default_gains(model)
        out.dynamics = self.dynamics or JointDynamics.for_model(model)
        out.reward = self.reward or RewardConfig.for_model(model)
        if out.target_hold not in ("extrapolate", "hold"):
            raise ValueError(f"unknown target_hold {out.target_hold!r}")
        if len(out.gains.kp) != model.n or out.dynamics.n != model.n:
            raise ValueError("gains or dynamics do not match the model")
        return out

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else [float(x) for x in np.asarray(a).ravel()]

        return {
            "rates": self.rates.to_dict(),
            "retarget": self.retarget.to_dict() if self.retarget else None,
            "gains": {"kp": arr(self.gains.kp), "kd": arr(self.gains.kd)} if self.gains else None,
            "dynamics": {k: arr(getattr(self.dynamics, k)) for k in ("inertia", "damping", "friction", "torque_limit")}
            | {"push_decay": self.dynamics.push_decay} if self.dynamics else None,
            "reward": self.reward.to_dict() if self.reward else None,
            "randomization": self.randomization.to_dict() if self.randomization else None,
            "contact": self.contact.__dict__,
            "termination": self.termination.__dict__,
            "duration": self.duration,
            "target_hold": self.target_hold,
            "penalty_scale": self.penalty_scale,
            "limit_fraction": self.limit_fraction,
        }

    @classmethod
    def from_dict(cls, doc: dict, model: RobotModel) -> "LoopConfig":
        from ..control import gains_from_profile

        cfg = cls()
        if "rates" in doc:
            cfg.rates = RateConfig.from_dict(doc["rates"])
        if doc.get("retarget") is not None:
            cfg.retarget = RetargetConfig.from_dict(doc["retarget"], model)
        if doc.get("gains") is not None:
            g = doc["gains"]
            cfg.gains = PDGains(np.array(g["kp"]), np.array(g["kd"])) if "kp" in g else gains_from_profile(model, g)
        if doc.get("dynamics") is not None:
            cfg.dynamics = JointDynamics.from_dict(doc["dynamics"], model)
        if doc.get("reward") is not None:
            cfg.reward = RewardConfig.from_dict(doc["reward"])
        if doc.get("randomization") is not None:
            cfg.randomization = DomainRandConfig.from_dict(doc["randomization"])
        if "contact" in doc:
            cfg.contact = ContactConfig(**doc["contact"])
        if "termination" in doc:
            cfg.termination = TerminationThresholds(**doc["termination"])
        for key in ("duration", "target_hold", "penalty_scale", "limit_fraction", "realtime"):
            if key in doc:
                setattr(cfg, key, doc[key])
        return cfg


def config_hash(doc) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# -- report -----------------------------------------------------------------------


@dataclass
class RunReport:
    metrics: MetricsReport
    termination: Termination
    reward_sums: dict[str, float]
    ticks: dict[str, int]
    seed: int
    config_hash: str
    model: str
    duration: float
    control_steps: int
    robot: ReferenceTrajectory | None = field(default=None, repr=False)
    reference: ReferenceTrajectory | None = field(default=None, repr=False)
    pair: TrajectoryPair | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "metrics": self.metrics.to_dict(),
            "termination": self.termination.to_dict(),
            "reward_sums": self.reward_sums,
            "ticks": self.ticks,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "model": self.model,
            "duration": self.duration,
            "control_steps": self.control_steps,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


@dataclass(frozen=True)
class TickRecord:
    """What the observer sees at each control tick."""

    step: int
    time: float
    observation: ActorObservation
    action: PolicyAction
    robot_root: RigidTransform
    robot_q: np.ndarray
    reference_root: RigidTransform
    reference_q: np.ndarray
    root_error: np.ndarray
    delta: int
    reward: RewardBreakdown


# -- helpers ------------------------------------------------------------------------


def body_angular_velocity(rot_prev: np.ndarray, rot: np.ndarray, fps: float) -> np.ndarray:
    """World angular velocity of each body from consecutive rotation matrices."""
    rel = np.einsum("bij,bkj->bik", rot, rot_prev)
    return Rotation.from_matrix(rel).as_rotvec() * fps


def foot_indices(model: RobotModel, names=("left_foot", "right_foot")) -> list[int]:
    return [model.frame_index(n) for n in names if n in model.frame_names]


@dataclass
class _BodySample:
    pos: np.ndarray
    rot: np.ndarray
    quat: np.ndarray


def _sample(kin) -> _BodySample:
    return _BodySample(kin.frame_pos, kin.frame_rot, frame_quaternions(kin))


# -- the loop ---------------------------------------------------------------------


def run_closed_loop(
    model: RobotModel,
    source,
    policy: Policy | None = None,
    config: LoopConfig | None = None,
    seed: int = 0,
    observer: Callable[[TickRecord], None] | None = None,
) -> RunReport:
    """Run one teleoperation episode in deterministic lockstep.

    Pre-shift is disabled: every observation is assembled with ``delta = 0``.
    """
    cfg = (config or LoopConfig()).resolved(model)
    if isinstance(source, MotionClip):
        source = ClipSource(source)
    policy = policy or ReferenceFollower(model)
    rates = cfg.rates
    duration = cfg.duration if cfg.duration is not None else source.duration
    if duration is None:
        raise ValueError("a live source needs an explicit duration")
    num_ticks = rates.num_ticks(duration)
    base_hz = rates.base_hz
    dt_phys = 1.0 / rates.physics_hz
    dt_ctrl = 1.0 / rates.control_hz
    n = model.n
    n_bodies = model.num_frames

    rng_rand, rng_push, rng_rfi = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    if cfg.randomization is not None:
        params = sample_randomization(cfg.randomization, n, rng_rand)
        dyn = randomized_dynamics(cfg.dynamics, params)
        gains = cfg.gains.scaled(params.kp_scale, params.kd_scale)
        pushes = PushSchedule(cfg.randomization.push_velocity_xy, cfg.randomization.push_interval, rng_push)
    else:
        params = RandomizedParams.nominal(n)
        dyn, gains, pushes = cfg.dynamics, cfg.gains, None
    limits = JointLimits.from_model(model)
    pos_limits = (model.lower, model.upper)
    layout = ObservationLayout(n, n_bodies, include_root_error=True)
    history = HistoryBuffer(n, n_bodies, layout.history)
    sigmas = SigmaState.default()
    feet = list(cfg.reward.foot_frames)
    non_feet = [f for f in range(n_bodies) if f not in feet and f != model.root_frame]
    air = FeetAirTracker(len(feet))

    counts = {MOCAP: 0, CONTROL: 0, PHYSICS: 0}
    control_total = sum(1 for k in range(0, num_ticks, rates.period(CONTROL)))
    human: MotionFrame | None = None
    state = None
    cmd: PDCommand | None = None
    cmd_time = 0.0
    tau_cmd_last = np.zeros(n)
    prev_actions = [np.zeros(n), np.zeros(n)]
    q_ref_prev = None
    ref_prev: _BodySample | None = None
    rob_prev: _BodySample | None = None
    ref_root_prev: RigidTransform | None = None
    termination = Termination(False)
    reward_sums = dict.fromkeys(TERM_NAMES, 0.0)

    rec = {k: [] for k in ("t", "root_pos", "root_quat", "q", "tau", "body", "body_quat",
                           "ref_root_pos", "ref_root_quat", "ref_q", "ref_body", "ref_body_quat")}
    wall0 = time.monotonic()

    for k, due in schedule(rates, num_ticks):
        t = k / base_hz
        if cfg.realtime:
            lag = wall0 + t - time.monotonic()
            if lag > 0:
                time.sleep(lag)
        if MOCAP in due:
            human = source.frame(t)
            counts[MOCAP] += 1
        if CONTROL in due:
            if human is None:
                raise SourceExhausted("control tick before any mocap frame")
            step_idx = counts[CONTROL]
            counts[CONTROL] += 1
            root_ref = reference_root(human.root)
            first = q_ref_prev is None
            q_seed = np.clip(np.zeros(n), model.lower, model.upper) if first else q_ref_prev
            iters = cfg.retarget.settle_iterations if first and cfg.retarget.settle_iterations > 0 else None
            q_ref = retarget_frame(model, q_seed, root_ref, human, cfg.retarget, dt_ctrl, iterations=iters)
            ref_now = _sample(kinematics(model, root_ref, q_ref))
            if first:
                state = initial_state(q_ref, root_ref.translation, root_ref.rotation, delay=params.delay)
                qd_ref = np.zeros(n)
                root_lin_ref = np.zeros(3)
                root_ang_ref = np.zeros(3)
            else:
                qd_ref = (q_ref - q_ref_prev) / dt_ctrl
                root_lin_ref = (root_ref.translation - ref_root_prev.translation) / dt_ctrl
                dyaw = yaw_of(root_ref.rotation) - yaw_of(ref_root_prev.rotation)
                dyaw = (dyaw + np.pi) % (2 * np.pi) - np.pi
                root_ang_ref = np.array([0.0, 0.0, dyaw / dt_ctrl])

            robot_root = RigidTransform(state.root_quat, state.root_pos)
            rob_now = _sample(kinematics(model, robot_root, state.q))
            root_error = state.root_pos - root_ref.translation
            delta = 0
            assert delta == 0, "pre-shift must be disabled during inference"
            rot_t = quat_to_matrix(state.root_quat).T
            proprio = ProprioState(rot_t @ state.root_ang_vel, projected_gravity(state.root_quat),
                                   state.q.copy(), state.qd.copy(), prev_actions[-1])
            obs = assemble_actor_obs(layout, proprio, history, ref_now.pos[None], rob_now.pos, 0, delta, root_error)
            reference_t = ReferenceStep(q_ref, qd_ref, root_ref, root_lin_ref, root_ang_ref, ref_now.pos)
            try:
                action = policy(obs, reference_t)
            except Exception as exc:
                raise PolicyError(f"policy failed at control step {step_idx}: {exc}") from exc
            q_target = np.asarray(action.q_target, dtype=float)
            if q_target.shape != (n,) or not np.all(np.isfinite(q_target)):
                raise PolicyError(f"policy returned an invalid action at control step {step_idx}")
            qd_target = np.zeros(n) if action.qd_target is None else np.asarray(action.qd_target, dtype=float)
            cmd = PDCommand(q_target, qd_target)
            cmd_time = t
            lin_cmd = root_lin_ref if action.root_lin_vel is None else action.root_lin_vel
            ang_cmd = root_ang_ref if action.root_ang_vel is None else action.root_ang_vel
            state = set_root_command(state, lin_cmd, ang_cmd)

            # rewards against the current reference
            if rob_prev is None:
                rob_lin = np.zeros((n_bodies, 3))
                rob_ang = np.zeros((n_bodies, 3))
                ref_lin = np.zeros((n_bodies, 3))
                ref_ang = np.zeros((n_bodies, 3))
            else:
                rob_lin = (rob_now.pos - rob_prev.pos) / dt_ctrl
                rob_ang = body_angular_velocity(rob_prev.rot, rob_now.rot, rates.control_hz)
                ref_lin = (ref_now.pos - ref_prev.pos) / dt_ctrl
                ref_ang = body_angular_velocity(ref_prev.rot, ref_now.rot, rates.control_hz)
            flags, normal, lateral = contact_proxies(rob_now.pos[feet], rob_lin[feet], cfg.contact)
            ref_flags = ref_now.pos[feet, 2] < cfg.contact.height_threshold
            touchdown = air.update(flags, dt_ctrl)
            collision = detect_collision(rob_now.pos, feet + [model.root_frame], cfg.contact)
            last = step_idx == control_total - 1
            termination = check_termination(state.root_pos, rob_now.pos, root_ref.translation, ref_now.pos,
                                            cfg.termination, clip_end=last)
            inputs = RewardInputs(
                rob_now.pos, rob_now.quat, rob_lin, rob_ang, ref_now.pos, ref_now.quat, ref_lin, ref_ang,
                state.q, state.qd, q_ref, qd_ref, tau_cmd_last, q_target, prev_actions[-1], prev_actions[-2],
                foot_vel=rob_lin[feet], contacts=np.array(flags), ref_contacts=ref_flags, contact_normal=normal,
                contact_lateral=lateral, air_time_at_touchdown=touchdown, collision=collision,
                terminated_early=termination.early,
            )
            breakdown = compute_rewards(inputs, cfg.reward, sigmas, limits, cfg.penalty_scale, cfg.limit_fraction)
            for name in TERM_NAMES:
                reward_sums[name] += breakdown.weighted[name]

            rec["t"].append(t)
            rec["root_pos"].append(state.root_pos.copy())
            rec["root_quat"].append(state.root_quat.copy())
            rec["q"].append(state.q.copy())
            rec["tau"].append(state.tau.copy())
            rec["body"].append(rob_now.pos)
            rec["body_quat"].append(rob_now.quat)
            rec["ref_root_pos"].append(root_ref.translation.copy())
            rec["ref_root_quat"].append(root_ref.rotation.copy())
            rec["ref_q"].append(q_ref)
            rec["ref_body"].append(ref_now.pos)
            rec["ref_body_quat"].append(ref_now.quat)

            if observer is not None:
                observer(TickRecord(step_idx, t, obs, action, robot_root, state.q.copy(), root_ref, q_ref,
                                    root_error, delta, breakdown))
            history.push(proprio, rob_now.pos, ref_now.pos - rob_now.pos, q_target)
            prev_actions = [prev_actions[-1], q_target]
            q_ref_prev, ref_prev, rob_prev, ref_root_prev = q_ref, ref_now, rob_now, root_ref
            if termination.early:
                log.info("terminated at step %d: %s", step_idx, termination.reason)
                break
        if PHYSICS in due:
            if state is None:
                raise SourceExhausted("physics tick before the first control tick")
            counts[PHYSICS] += 1
            if cfg.target_hold == "extrapolate":
                q_star = cmd.q_target + cmd.qd_target * (t - cmd_time)
            else:
                q_star = cmd.q_target
            tau_cmd_last = pd_torque(PDCommand(q_star, cmd.qd_target), JointState(state.q, state.qd), gains)
            if pushes is not None:
                state = apply_push(state, pushes, rng_push)
            state = step(state, tau_cmd_last, dyn, dt_phys, rng=rng_rfi if cfg.randomization else None,
                         pos_limits=pos_limits)

    pair = TrajectoryPair(
        np.array(rec["body"]), np.array(rec["root_pos"]), np.array(rec["root_quat"]), np.array(rec["q"]),
        np.array(rec["tau"]), np.array(rec["ref_body"]), np.array(rec["ref_root_pos"]),
        np.array(rec["ref_root_quat"]), np.array(rec["ref_q"]),
    )
    fps = float(rates.control_hz)
    times = np.array(rec["t"])
    robot = ReferenceTrajectory(fps, times, pair.root_pos, pair.root_quat, pair.q, pair.body_pos,
                                np.array(rec["body_quat"]))
    reference = ReferenceTrajectory(fps, times, pair.ref_root_pos, pair.ref_root_quat, pair.ref_q,
                                    pair.ref_body_pos, np.array(rec["ref_body_quat"]))
    doc = {"loop": cfg.to_dict(), "model": model.to_dict()}
    return RunReport(
        metrics=compute_metrics(pair),
        termination=termination,
        reward_sums=reward_sums,
        ticks={"base": num_ticks, **counts},
        seed=seed,
        config_hash=config_hash(doc),
        model=model.name,
        duration=duration,
        control_steps=counts[CONTROL],
        robot=robot,
        reference=reference,
        pair=pair,
    )
