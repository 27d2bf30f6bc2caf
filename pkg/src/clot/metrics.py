"""Tracking-accuracy and torque-smoothness metrics over trajectory pairs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .transforms import quat_to_matrix


@dataclass
class TrajectoryPair:
    """Robot and reference trajectories over T steps.

    body_pos (T, N_b, 3), root_pos (T, 3), root_quat (T, 4), q (T, n_a),
    torque (T, n_a); ``ref_*`` are the reference counterparts.
    """

    body_pos: np.ndarray
    root_pos: np.ndarray
    root_quat: np.ndarray
    q: np.ndarray
    torque: np.ndarray
    ref_body_pos: np.ndarray
    ref_root_pos: np.ndarray
    ref_root_quat: np.ndarray
    ref_q: np.ndarray

    def __post_init__(self):
        for name in ("body_pos", "root_pos", "root_quat", "q", "torque",
                     "ref_body_pos", "ref_root_pos", "ref_root_quat", "ref_q"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        T = self.body_pos.shape[0]
        if T < 1:
            raise ValueError("trajectory pair is empty")
        if self.body_pos.shape != self.ref_body_pos.shape or self.body_pos.ndim != 3:
            raise ValueError("body position arrays must match and be (T, N_b, 3)")
        if self.root_pos.shape != (T, 3) or self.ref_root_pos.shape != (T, 3):
            raise ValueError("root positions must be (T, 3)")
        if self.root_quat.shape != (T, 4) or self.ref_root_quat.shape != (T, 4):
            raise ValueError("root orientations must be (T, 4)")
        if self.q.shape != self.ref_q.shape or self.q.shape[0] != T:
            raise ValueError("joint arrays must match and be (T, n_a)")
        if self.torque.shape[0] != T:
            raise ValueError("torque array must be (T, n_a)")

    @property
    def T(self) -> int:
        return self.body_pos.shape[0]


@dataclass
class MetricsReport:
    e_mgbp: float
    e_mlbp: float
    e_mgrp: float
    e_mdp: float
    m_jt: float
    sigma_mjt: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def e_mgbp(pair: TrajectoryPair) -> float:
    return float(np.linalg.norm(pair.body_pos - pair.ref_body_pos, axis=-1).mean())


def _local(body, root_pos, root_quat):
    rot = quat_to_matrix(root_quat)  # (T, 3, 3)
    return np.einsum("tji,tbj->tbi", rot, body - root_pos[:, None, :])


def e_mlbp(pair: TrajectoryPair) -> float:
    local = _local(pair.body_pos, pair.root_pos, pair.root_quat)
    ref_local = _local(pair.ref_body_pos, pair.ref_root_pos, pair.ref_root_quat)
    return float(np.linalg.norm(local - ref_local, axis=-1).mean())


def e_mgrp(pair: TrajectoryPair) -> float:
    return float(np.linalg.norm(pair.root_pos - pair.ref_root_pos, axis=-1).mean())


def e_mdp(pair: TrajectoryPair) -> float:
    return float(np.abs(pair.q - pair.ref_q).mean())


def per_step_torque(pair: TrajectoryPair) -> np.ndarray:
    return np.abs(pair.torque).mean(axis=1)


def m_jt(pair: TrajectoryPair) -> float:
    return float(per_step_torque(pair).mean())


def sigma_mjt(pair: TrajectoryPair) -> float:
    """Population standard deviation of the per-step mean torque magnitude."""
    tau_bar = per_step_torque(pair)
    return float(np.sqrt(np.mean((tau_bar - tau_bar.mean()) ** 2)))


def compute_metrics(pair: TrajectoryPair) -> MetricsReport:
    return MetricsReport(e_mgbp(pair), e_mlbp(pair), e_mgrp(pair), e_mdp(pair), m_jt(pair), sigma_mjt(pair))


def per_window_errors(pair: TrajectoryPair, steps_per_window: int) -> list[dict]:
    """Metrics over consecutive windows (e.g. one simulated second each)."""
    rows = []
    for start in range(0, pair.T, steps_per_window):
        sl = slice(start, start + steps_per_window)
        sub = TrajectoryPair(
            pair.body_pos[sl], pair.root_pos[sl], pair.root_quat[sl], pair.q[sl], pair.torque[sl],
            pair.ref_body_pos[sl], pair.ref_root_pos[sl], pair.ref_root_quat[sl], pair.ref_q[sl],
        )
        rows.append({"window": start // steps_per_window, **compute_metrics(sub).to_dict()})
    return rows
