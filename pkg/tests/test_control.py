import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clot.control import (
    PDCommand,
    PDGains,
    adam_pro_gains,
    clamp_torque,
    default_gains,
    gains_from_profile,
    load_gains,
    pd_torque,
)
from clot.kinematics import JointState
from clot.models import ADAM_PRO_GAINS


def test_hip_pitch_torque(humanoid):
    gains = adam_pro_gains(humanoid)
    i = humanoid.joint_index("left_hip_pitch")
    assert (gains.kp[i], gains.kd[i]) == (305.0, 5.0)
    q = np.zeros(humanoid.n)
    target = q.copy()
    target[i] = 0.1
    tau = pd_torque(PDCommand.position(target), JointState(q, np.zeros(humanoid.n)), gains)
    assert tau[i] == pytest.approx(30.5, abs=1e-12)
    assert np.count_nonzero(tau) == 1


def test_gain_table_covers_every_humanoid_joint(humanoid):
    gains = adam_pro_gains(humanoid)
    assert np.all(gains.kp > 0) and np.all(gains.kd > 0)
    for side in ("left", "right"):
        for joint in ("hip_pitch", "knee_pitch", "ankle_pitch", "shoulder_pitch"):
            i = humanoid.joint_index(f"{side}_{joint}")
            assert (gains.kp[i], gains.kd[i]) == tuple(ADAM_PRO_GAINS[joint])


def test_damping_term():
    gains = PDGains(np.array([10.0]), np.array([2.0]))
    tau = pd_torque(PDCommand(np.zeros(1), np.array([1.0])), JointState(np.zeros(1), np.array([3.0])), gains)
    assert tau[0] == -4.0


@settings(max_examples=300, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    a=st.floats(-10, 10),
    b=st.floats(-10, 10),
)
def test_pd_linear_in_errors(seed, a, b):
    rng = np.random.default_rng(seed)
    n = 5
    gains = PDGains(rng.uniform(0, 300, n), rng.uniform(0, 10, n))
    state = JointState(rng.normal(size=n), rng.normal(size=n))
    e1, e2 = rng.normal(size=(2, n)), rng.normal(size=(2, n))

    def tau(e):
        return pd_torque(PDCommand(state.q + e[0], state.qd + e[1]), state, gains)

    lhs = tau(a * e1 + b * e2)
    rhs = a * tau(e1) + b * tau(e2)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9)


def test_shape_mismatch_rejected():
    gains = PDGains(np.ones(3), np.ones(3))
    with pytest.raises(ValueError, match="q_target"):
        pd_torque(PDCommand.position(np.zeros(2)), JointState(np.zeros(3), np.zeros(3)), gains)


def test_negative_gains_rejected():
    with pytest.raises(ValueError):
        PDGains(np.array([-1.0]), np.array([1.0]))


def test_clamp_reports_overshoot(humanoid):
    tau = np.zeros(humanoid.n)
    tau[0] = humanoid.torque_limit[0] + 7.0
    tau[1] = -humanoid.torque_limit[1] - 3.0
    clamped, over = clamp_torque(tau, humanoid)
    assert clamped[0] == humanoid.torque_limit[0]
    assert clamped[1] == -humanoid.torque_limit[1]
    assert over[0] == pytest.approx(7.0) and over[1] == pytest.approx(3.0)
    assert np.all(over[2:] == 0)


def test_profile_requires_every_joint(planar):
    with pytest.raises(ValueError, match="lacks"):
        gains_from_profile(planar, {"shoulder": [1, 1]})
    names = planar.joint_names
    with pytest.raises(ValueError, match="unknown"):
        gains_from_profile(planar, {names[0]: [1, 1], names[1]: [1, 1], "extra": [1, 1]})


def test_load_gains_file(tmp_path, planar):
    path = tmp_path / "g.json"
    path.write_text(json.dumps({name: [10 + i, 1] for i, name in enumerate(planar.joint_names)}))
    gains = load_gains(path, planar)
    np.testing.assert_array_equal(gains.kp, [10, 11])


def test_default_gains_generic_fallback(chain):
    gains = default_gains(chain)
    assert gains.kp.shape == (chain.n,)
