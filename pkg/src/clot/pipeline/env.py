"""Training-mode tracking environment over an offline reference trajectory.

Adds what inference leaves out: the goal pre-shift, domain randomization,
pushes, observation noise and curriculum-driven difficulty. Rewards and
terminations are always evaluated against the unshifted reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..control import PDCommand, PDGains, default_gains, pd_torque
from ..curriculum import CurriculumState, preshift_max_seconds, push_interval_range
from ..kinematics import JointState, RobotModel, frame_quaternions, kinematics
from ..observation import (
    ActorObservation,
    HistoryBuffer,
    ObservationLayout,
    ProprioState,
    assemble_actor_obs,
    assemble_critic_obs,
    sample_preshift,
)
from ..retarget import ReferenceTrajectory
from ..reward import (
    FeetAirTracker,
    JointLimits,
    RewardBreakdown,
    RewardConfig,
    RewardInputs,
    SigmaState,
    compute_rewards,
    update_sigma,
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
    update_contacts,
)
from ..transforms import RigidTransform, projected_gravity, quat_conj, quat_mul, quat_to_matrix, quat_to_rotvec
from .loop import PolicyAction, body_angular_velocity

# uniform observation noise half-widths at curriculum noise level 1
NOISE_LEVELS = {"base_ang_vel": 0.2, "projected_gravity": 0.05, "q": 0.01, "qd": 0.5}


@dataclass
class EnvConfig:
    gains: PDGains | None = None
    dynamics: JointDynamics | None = None
    reward: RewardConfig | None = None
    randomization: DomainRandConfig | None = field(default_factory=DomainRandConfig)
    contact: ContactConfig = field(default_factory=ContactConfig)
    preshift_probability: float = 0.5
    physics_hz: int = 400
    adapt_sigma: bool = True
    observation_noise: bool = True


@dataclass(frozen=True)
class StepResult:
    obs: ActorObservation
    critic_obs: np.ndarray
    reward: RewardBreakdown
    termination: Termination


class TrackingEnv:
    def __init__(self, model: RobotModel, reference: ReferenceTrajectory, config: EnvConfig | None = None,
                 curriculum: CurriculumState | None = None, sigmas: SigmaState | None = None):
        self.model = model
        self.ref = reference
        self.cfg = config or EnvConfig()
        self.curriculum = curriculum or CurriculumState()
        self.sigmas = sigmas or SigmaState.default()
        self.gains0 = self.cfg.gains or default_gains(model)
        self.dyn0 = self.cfg.dynamics or JointDynamics.for_model(model)
        self.reward_cfg = self.cfg.reward or RewardConfig.for_model(model)
        self.limits = JointLimits.from_model(model)
        if self.cfg.physics_hz % int(round(reference.fps)):
            raise ValueError("physics rate must be a multiple of the reference rate")
        self.substeps = self.cfg.physics_hz // int(round(reference.fps))
        self.dt = 1.0 / reference.fps
        self.layout = ObservationLayout(model.n, model.num_frames)
        self.feet = list(self.reward_cfg.foot_frames)
        self._ref_lin = np.zeros_like(reference.frame_pos)
        self._ref_ang = np.zeros_like(reference.frame_pos)
        rots = quat_to_matrix(reference.frame_quat)
        for k in range(1, len(reference)):
            self._ref_lin[k] = (reference.frame_pos[k] - reference.frame_pos[k - 1]) * reference.fps
            self._ref_ang[k] = body_angular_velocity(rots[k - 1], rots[k], reference.fps)
        self._ref_rot = rots

    # -- episode control ------------------------------------------------------

    def reset(self, seed: int = 0, delta: int | None = None, start: int = 0) -> ActorObservation:
        n = self.model.n
        streams = np.random.SeedSequence(seed).spawn(5)
        self.rng_rand, self.rng_push, self.rng_rfi, self.rng_noise, self.rng_shift = (
            np.random.default_rng(s) for s in streams)
        drawn = sample_preshift(self.rng_shift, self.cfg.preshift_probability,
                                preshift_max_seconds(self.curriculum), self.ref.fps)
        self.delta = drawn if delta is None else int(delta)
        rand = self.cfg.randomization
        if rand is not None:
            self.params = sample_randomization(rand, n, self.rng_rand)
            self.dyn = randomized_dynamics(self.dyn0, self.params)
            self.gains = self.gains0.scaled(self.params.kp_scale, self.params.kd_scale)
            lo, hi = push_interval_range(self.curriculum, rand.push_interval)
            self.pushes = PushSchedule(rand.push_velocity_xy, (lo, hi), self.rng_push)
        else:
            self.params = RandomizedParams.nominal(n)
            self.dyn, self.gains, self.pushes = self.dyn0, self.gains0, None
        self.t = start
        ref = self.ref
        self.state = initial_state(ref.q[start], ref.root_pos[start], ref.root_quat[start], delay=self.params.delay)
        self.history = HistoryBuffer(n, self.model.num_frames, self.layout.history)
        # a_{t-2}, a_{t-1}
        self.actions = [np.zeros(n), np.zeros(n)]
        self.air = FeetAirTracker(len(self.feet))
        self.tau_cmd = np.zeros(n)
        self._kin = kinematics(self.model, self._root(), self.state.q)
        self._prev_pos = self._kin.frame_pos.copy()
        self._prev_rot = self._kin.frame_rot.copy()
        self._set_root_command()
        self.obs = self._observe()
        return self.obs

    def _root(self) -> RigidTransform:
        return RigidTransform(self.state.root_quat, self.state.root_pos)

    def _set_root_command(self) -> None:
        """Root follows the reference root velocity over the next control step."""
        ref, k = self.ref, self.t
        k1 = min(k + 1, len(ref) - 1)
        lin = (ref.root_pos[k1] - ref.root_pos[k]) * ref.fps
        ang = quat_to_rotvec(quat_mul(ref.root_quat[k1], quat_conj(ref.root_quat[k]))) * ref.fps
        self.state = set_root_command(self.state, lin, ang)

    def _proprio(self) -> ProprioState:
        s = self.state
        rot_t = quat_to_matrix(s.root_quat).T
        parts = {
            "base_ang_vel": rot_t @ s.root_ang_vel,
            "projected_gravity": projected_gravity(s.root_quat),
            "q": s.q.copy(),
            "qd": s.qd.copy(),
        }
        # a fixed number of draws per step keeps every other stream aligned
        level = self.curriculum.current("noise") if self.cfg.observation_noise else 0.0
        for name, base in NOISE_LEVELS.items():
            u = self.rng_noise.uniform(-1.0, 1.0, parts[name].shape)
            parts[name] = parts[name] + level * base * u
        return ProprioState(parts["base_ang_vel"], parts["projected_gravity"], parts["q"], parts["qd"],
                            self.actions[-1])

    def _observe(self) -> ActorObservation:
        self._proprio_now = self._proprio()
        return assemble_actor_obs(self.layout, self._proprio_now, self.history, self.ref.frame_pos,
                                  self._kin.frame_pos, self.t, self.delta)

    def critic_observation(self) -> np.ndarray:
        return assemble_critic_obs(self.layout, self._proprio_now, self.history, self.ref.frame_pos,
                                   self._kin.frame_pos, self.t, self.state.root_lin_vel,
                                   self.params.privileged_vector(), self.state.push_vel)

    def reference_action(self) -> PolicyAction:
        k = min(self.t + 1, len(self.ref) - 1)
        return PolicyAction(self.ref.q[k].copy())

    # -- stepping ---------------------------------------------------------------

    def step(self, action) -> StepResult:
        if isinstance(action, PolicyAction):
            q_target = np.asarray(action.q_target, dtype=float)
            qd_target = np.zeros_like(q_target) if action.qd_target is None else np.asarray(action.qd_target)
        else:
            q_target = np.asarray(action, dtype=float)
            qd_target = np.zeros_like(q_target)
        if q_target.shape != (self.model.n,) or not np.all(np.isfinite(q_target)):
            raise ValueError("invalid action")
        # the transition entering the history is the one observed at time t
        ref_now = self.ref.frame_pos[self.t]
        self.history.push(self._proprio_now, self._kin.frame_pos, ref_now - self._kin.frame_pos, q_target)

        cmd = PDCommand(q_target, qd_target)
        dt = 1.0 / self.cfg.physics_hz
        for _ in range(self.substeps):
            self.tau_cmd = pd_torque(cmd, JointState(self.state.q, self.state.qd), self.gains)
            if self.pushes is not None:
                self.state = apply_push(self.state, self.pushes, self.rng_push)
            self.state = step(self.state, self.tau_cmd, self.dyn, dt,
                              rng=self.rng_rfi if self.cfg.randomization else None,
                              pos_limits=(self.model.lower, self.model.upper))
        self.t += 1
        self._kin = kinematics(self.model, self._root(), self.state.q)
        reward, term = self._evaluate(q_target)
        self.actions = [self.actions[-1], q_target]
        self._prev_pos = self._kin.frame_pos.copy()
        self._prev_rot = self._kin.frame_rot.copy()
        if not term.terminated:
            self._set_root_command()
        self.obs = self._observe()
        return StepResult(self.obs, self.critic_observation(), reward, term)

    def _evaluate(self, q_target) -> tuple[RewardBreakdown, Termination]:
        ref, k, kin = self.ref, self.t, self._kin
        fps = ref.fps
        lin = (kin.frame_pos - self._prev_pos) * fps
        ang = body_angular_velocity(self._prev_rot, kin.frame_rot, fps)
        quat = frame_quaternions(kin)
        feet = self.feet
        flags, normal, lateral = contact_proxies(kin.frame_pos[feet], lin[feet], self.cfg.contact)
        self.state = update_contacts(self.state, kin.frame_pos[feet], lin[feet], self.cfg.contact)
        ref_flags = ref.frame_pos[k][feet, 2] < self.cfg.contact.height_threshold
        thresholds = TerminationThresholds.from_curriculum(self.curriculum)
        term = check_termination(self.state.root_pos, kin.frame_pos, ref.root_pos[k], ref.frame_pos[k],
                                 thresholds, clip_end=k >= len(ref) - 1)
        collision = detect_collision(kin.frame_pos, feet + [self.model.root_frame], self.cfg.contact)
        inputs = RewardInputs(
            kin.frame_pos, quat, lin, ang, ref.frame_pos[k], ref.frame_quat[k], self._ref_lin[k], self._ref_ang[k],
            self.state.q, self.state.qd, ref.q[k], ref.joint_velocity(k), self.tau_cmd, q_target,
            self.actions[-1], self.actions[-2], foot_vel=lin[feet], contacts=np.array(flags),
            ref_contacts=ref_flags, contact_normal=normal, contact_lateral=lateral,
            air_time_at_touchdown=self.air.update(flags, self.dt), collision=collision,
            terminated_early=term.early,
        )
        reward = compute_rewards(inputs, self.reward_cfg, self.sigmas, self.limits,
                                 self.curriculum.current("reward_penalty"), self.curriculum.current("reward_limits"))
        if self.cfg.adapt_sigma:
            self.sigmas = update_sigma(self.sigmas, {name: reward.errors[name] for name in self.sigmas.sigma})
        return reward, term
