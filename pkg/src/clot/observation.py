"""Actor and critic observation assembly with a randomized goal pre-shift.

The actor sees proprioception, a window of future reference body positions
and a history buffer. During training the future window may be read at a
forward offset ``delta``; every other block always reads the current time.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np

HISTORY_LEN = 10
FUTURE_LEN = 10


@dataclass(frozen=True)
class ObservationLayout:
    n: int
    n_bodies: int
    history: int = HISTORY_LEN
    future: int = FUTURE_LEN
    # closed-loop deployment appends the global root error (robot minus reference)
    include_root_error: bool = False

    @cached_property
    def blocks(self) -> tuple[tuple[str, int], ...]:
        n, nb, h, f = self.n, self.n_bodies, self.history, self.future
        rows = [
            ("last_action", n),
            ("base_ang", 3),
            ("dof_pos", n),
            ("dof_vel", n),
            ("future_dif_pos", f * nb * 3),
            ("future_ref_pos", f * nb * 3),
            ("history_base_ang", h * 3),
            ("history_projected_gravity", h * 3),
            ("history_dof_pos", h * n),
            ("history_dof_vel", h * n),
            ("history_dif_pos", h * nb * 3),
            ("history_body_pos", h * nb * 3),
            ("history_actions", h * n),
        ]
        if self.include_root_error:
            rows.append(("root_error", 3))
        return tuple(rows)

    @cached_property
    def slices(self) -> dict[str, slice]:
        out, start = {}, 0
        for name, size in self.blocks:
            out[name] = slice(start, start + size)
            start += size
        return out

    @property
    def size(self) -> int:
        return sum(size for _, size in self.blocks)

    @property
    def goal_blocks(self) -> tuple[str, ...]:
        return ("future_dif_pos", "future_ref_pos")

    def table(self) -> list[dict]:
        return [{"block": name, "offset": self.slices[name].start, "size": size} for name, size in self.blocks]


@dataclass(frozen=True)
class ProprioState:
    base_ang_vel: np.ndarray
    projected_gravity: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    prev_action: np.ndarray

    def check(self, n: int) -> None:
        for name, size in (("base_ang_vel", 3), ("projected_gravity", 3), ("q", n), ("qd", n), ("prev_action", n)):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (size,):
                raise ValueError(f"proprio {name} has shape {arr.shape}, expected ({size},)")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"proprio {name} is not finite")


class HistoryBuffer:
    """Last ``capacity`` entries, zero-filled at episode start, oldest first."""

    def __init__(self, n: int, n_bodies: int, capacity: int = HISTORY_LEN):
        self.n, self.n_bodies, self.capacity = n, n_bodies, capacity
        self.reset()

    def reset(self) -> None:
        h, n, nb = self.capacity, self.n, self.n_bodies
        self.base_ang = deque((np.zeros(3) for _ in range(h)), maxlen=h)
        self.gravity = deque((np.zeros(3) for _ in range(h)), maxlen=h)
        self.q = deque((np.zeros(n) for _ in range(h)), maxlen=h)
        self.qd = deque((np.zeros(n) for _ in range(h)), maxlen=h)
        self.dif_pos = deque((np.zeros((nb, 3)) for _ in range(h)), maxlen=h)
        self.body_pos = deque((np.zeros((nb, 3)) for _ in range(h)), maxlen=h)
        self.actions = deque((np.zeros(n) for _ in range(h)), maxlen=h)
        self.count = 0

    def push(self, proprio: ProprioState, body_pos, dif_pos, action) -> None:
        body_pos = np.asarray(body_pos, dtype=float)
        dif_pos = np.asarray(dif_pos, dtype=float)
        if body_pos.shape != (self.n_bodies, 3) or dif_pos.shape != (self.n_bodies, 3):
            raise ValueError("history body arrays must be (N_b, 3)")
        self.base_ang.append(np.array(proprio.base_ang_vel, dtype=float))
        self.gravity.append(np.array(proprio.projected_gravity, dtype=float))
        self.q.append(np.array(proprio.q, dtype=float))
        self.qd.append(np.array(proprio.qd, dtype=float))
        self.dif_pos.append(dif_pos.copy())
        self.body_pos.append(body_pos.copy())
        self.actions.append(np.array(action, dtype=float))
        self.count += 1

    def blocks(self) -> dict[str, np.ndarray]:
        return {
            "history_base_ang": np.concatenate(self.base_ang),
            "history_projected_gravity": np.concatenate(self.gravity),
            "history_dof_pos": np.concatenate(self.q),
            "history_dof_vel": np.concatenate(self.qd),
            "history_dif_pos": np.concatenate([d.ravel() for d in self.dif_pos]),
            "history_body_pos": np.concatenate([b.ravel() for b in self.body_pos]),
            "history_actions": np.concatenate(self.actions),
        }


@dataclass(frozen=True)
class ActorObservation:
    vector: np.ndarray
    layout: ObservationLayout
    delta: int = 0

    def block(self, name: str) -> np.ndarray:
        return self.vector[self.layout.slices[name]]

    def __len__(self) -> int:
        return len(self.vector)


def sample_preshift(rng: np.random.Generator, apply_probability: float = 0.5, t_max_pre: float = 1.0,
                    control_fps: float = 50.0) -> int:
    """Goal offset in control steps: 0, or uniform on {0..round(t_max_pre*fps)}.

    Always consumes exactly two draws so callers' RNG streams stay aligned.
    """
    if not 0.0 <= apply_probability <= 1.0:
        raise ValueError("apply_probability must be in [0, 1]")
    if t_max_pre < 0:
        raise ValueError("t_max_pre must be >= 0")
    apply = rng.random() < apply_probability
    max_steps = int(round(t_max_pre * control_fps))
    delta = int(rng.integers(0, max_steps + 1))
    return delta if apply else 0


def goal_indices(t: int, delta: int, length: int, future: int = FUTURE_LEN) -> np.ndarray:
    """Reference indices t+1+delta .. t+future+delta, held at the last frame."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    return np.minimum(np.arange(t + 1 + delta, t + 1 + delta + future), length - 1)


def assemble_actor_obs(
    layout: ObservationLayout,
    proprio: ProprioState,
    history: HistoryBuffer,
    reference_body_pos: np.ndarray,
    body_pos_now: np.ndarray,
    t: int,
    delta: int = 0,
    root_error=None,
) -> ActorObservation:
    """Flatten one actor observation.

    ``reference_body_pos`` is (T, N_b, 3); the goal window reads indices
    shifted by ``delta``, everything else is taken at time ``t`` as given.
    """
    proprio.check(layout.n)
    ref = np.asarray(reference_body_pos, dtype=float)
    body_now = np.asarray(body_pos_now, dtype=float)
    if ref.ndim != 3 or ref.shape[1:] != (layout.n_bodies, 3):
        raise ValueError(f"reference must be (T, {layout.n_bodies}, 3), got {ref.shape}")
    if body_now.shape != (layout.n_bodies, 3):
        raise ValueError("current body positions must be (N_b, 3)")
    if (history.n, history.n_bodies, history.capacity) != (layout.n, layout.n_bodies, layout.history):
        raise ValueError("history buffer does not match the layout")
    future = ref[goal_indices(t, delta, len(ref), layout.future)]
    parts = {
        "last_action": proprio.prev_action,
        "base_ang": proprio.base_ang_vel,
        "dof_pos": proprio.q,
        "dof_vel": proprio.qd,
        "future_dif_pos": (future - body_now[None]).ravel(),
        "future_ref_pos": future.ravel(),
        **history.blocks(),
    }
    if layout.include_root_error:
        if root_error is None:
            raise ValueError("layout expects a root error")
        parts["root_error"] = np.asarray(root_error, dtype=float)
    vec = np.concatenate([np.asarray(parts[name], dtype=float).ravel() for name, _ in layout.blocks])
    return ActorObservation(vec, layout, delta)


def privileged_size(n: int, n_params: int) -> int:
    return 3 + n_params + 3


def assemble_critic_obs(
    layout: ObservationLayout,
    proprio: ProprioState,
    history: HistoryBuffer,
    reference_body_pos: np.ndarray,
    body_pos_now: np.ndarray,
    t: int,
    root_lin_vel,
    randomization: np.ndarray,
    push_vel,
    root_error=None,
) -> np.ndarray:
    """Unshifted actor observation followed by privileged fields: true root
    linear velocity, randomization deviations from nominal, active push."""
    actor = assemble_actor_obs(layout, proprio, history, reference_body_pos, body_pos_now, t, 0, root_error)
    return np.concatenate([
        actor.vector,
        np.asarray(root_lin_vel, dtype=float).reshape(3),
        np.asarray(randomization, dtype=float).ravel(),
        np.asarray(push_vel, dtype=float).reshape(3),
    ])


def observation_csv_header(layout: ObservationLayout) -> str:
    cols = []
    for name, size in layout.blocks:
        cols += [f"{name}[{i}]" for i in range(size)]
    return ",".join(cols)
