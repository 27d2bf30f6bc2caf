import json

import numpy as np
import pytest

from clot.metrics import TrajectoryPair, compute_metrics, e_mgbp, e_mlbp, per_window_errors
from clot.transforms import quat_from_axis_angle, quat_mul, quat_normalize, quat_rotate

from oracles import naive_metrics


def random_pair(rng, T, nb=29, na=23):
    quats = np.array([quat_normalize(q) for q in rng.normal(size=(T, 4))])
    ref_quats = np.array([quat_normalize(q) for q in rng.normal(size=(T, 4))])
    return TrajectoryPair(
        rng.normal(size=(T, nb, 3)), rng.normal(size=(T, 3)), quats, rng.normal(size=(T, na)),
        rng.normal(size=(T, na)) * 20, rng.normal(size=(T, nb, 3)), rng.normal(size=(T, 3)), ref_quats,
        rng.normal(size=(T, na)),
    )


def oracle(pair):
    return naive_metrics(pair.body_pos, pair.root_pos, pair.root_quat, pair.q, pair.torque,
                         pair.ref_body_pos, pair.ref_root_pos, pair.ref_root_quat, pair.ref_q)


@pytest.mark.parametrize("seed", range(5))
def test_matches_naive_oracle(seed):
    rng = np.random.default_rng(seed)
    pair = random_pair(rng, int(rng.integers(1, 60)))
    got = compute_metrics(pair).to_dict()
    want = oracle(pair)
    for key in want:
        assert got[key] == pytest.approx(want[key], abs=1e-12, rel=1e-12), key


def test_three_four_five_case():
    T, nb = 4, 3
    zq = np.tile([1.0, 0, 0, 0], (T, 1))
    body = np.zeros((T, nb, 3))
    ref = np.zeros((T, nb, 3))
    ref[..., 0], ref[..., 1] = 0.3, 0.4
    pair = TrajectoryPair(body, np.zeros((T, 3)), zq, np.zeros((T, 1)), np.zeros((T, 1)),
                          ref, np.zeros((T, 3)), zq, np.zeros((T, 1)))
    assert e_mgbp(pair) == 0.5


def test_translated_pair_has_zero_local_error(rng):
    T = 20
    base = random_pair(rng, T)
    shift = rng.normal(size=(T, 1, 3))
    pair = TrajectoryPair(base.body_pos, base.root_pos, base.root_quat, base.q, base.torque,
                          base.body_pos + shift, base.root_pos + shift[:, 0], base.root_quat, base.q)
    assert e_mlbp(pair) < 1e-15
    assert e_mgbp(pair) > 0


def test_local_error_is_rotation_invariant(rng):
    T = 10
    base = random_pair(rng, T)
    rot = quat_from_axis_angle([0, 0, 1], 0.7)
    body = np.array([[quat_rotate(rot, p) for p in frame] for frame in base.body_pos])
    root_pos = np.array([quat_rotate(rot, p) for p in base.root_pos])
    root_quat = np.array([quat_mul(rot, qq) for qq in base.root_quat])
    pair = TrajectoryPair(base.body_pos, base.root_pos, base.root_quat, base.q, base.torque,
                          body, root_pos, root_quat, base.q)
    assert e_mlbp(pair) < 1e-12


def test_torque_statistics():
    T = 4
    tau = np.array([[1.0, -1.0], [2.0, 2.0], [3.0, -3.0], [4.0, 4.0]])
    zq = np.tile([1.0, 0, 0, 0], (T, 1))
    z = np.zeros((T, 1, 3))
    pair = TrajectoryPair(z, np.zeros((T, 3)), zq, np.zeros((T, 2)), tau, z, np.zeros((T, 3)), zq, np.zeros((T, 2)))
    m = compute_metrics(pair)
    assert m.m_jt == 2.5
    assert m.sigma_mjt == pytest.approx(np.sqrt(1.25), abs=1e-15)


def test_json_is_sorted_and_complete(rng):
    doc = json.loads(compute_metrics(random_pair(rng, 3)).to_json())
    assert list(doc) == sorted(["e_mgbp", "e_mlbp", "e_mgrp", "e_mdp", "m_jt", "sigma_mjt"])


def test_per_window_rows(rng):
    pair = random_pair(rng, 25)
    rows = per_window_errors(pair, 10)
    assert [r["window"] for r in rows] == [0, 1, 2]
    sub = TrajectoryPair(*(getattr(pair, k)[20:] for k in (
        "body_pos", "root_pos", "root_quat", "q", "torque", "ref_body_pos", "ref_root_pos", "ref_root_quat",
        "ref_q")))
    assert rows[2]["e_mdp"] == compute_metrics(sub).e_mdp


def test_shape_errors():
    zq = np.tile([1.0, 0, 0, 0], (2, 1))
    with pytest.raises(ValueError):
        TrajectoryPair(np.zeros((2, 3, 3)), np.zeros((2, 3)), zq, np.zeros((2, 1)), np.zeros((2, 1)),
                       np.zeros((2, 4, 3)), np.zeros((2, 3)), zq, np.zeros((2, 1)))
    with pytest.raises(ValueError, match="empty"):
        TrajectoryPair(np.zeros((0, 3, 3)), np.zeros((0, 3)), zq[:0], np.zeros((0, 1)), np.zeros((0, 1)),
                       np.zeros((0, 3, 3)), np.zeros((0, 3)), zq[:0], np.zeros((0, 1)))
