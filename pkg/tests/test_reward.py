import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clot.reward import (
    KERNEL_TERMS,
    REWARD_TERMS,
    TERM_LABELS,
    TERM_NAMES,
    FeetAirTracker,
    JointLimits,
    RewardBreakdown,
    RewardConfig,
    RewardInputs,
    SigmaState,
    compute_rewards,
    load_reward_config,
    soft_limit_violation,
    tracking_kernel,
    update_sigma,
)
from clot.transforms import quat_normalize

REWARD_WEIGHTS = {
    "Contact Consistency Tracking": 0.5,
    "Joint Limit Satisfaction Reward": 1.0,
    "Extended Body Position Tracking": 1.2,
    "VR Keypoint (3-Point) Tracking": 1.6,
    "Feet Position Tracking": 1.5,
    "Extended Body Orientation Tracking": 1.5,
    "Extended Body Angular Velocity Tracking": 0.6,
    "Extended Body Linear Velocity Tracking": 0.6,
    "Joint Position Tracking": 1.0,
    "Joint Velocity Tracking": 1.0,
    "Feet Air-Time Reward": 160.0,
    "Alive Bonus": 0.2,
    "Feet Height Deviation Penalty": -20.0,
    "Torque Limit Violation Penalty": -1e-4,
    "Action Rate Penalty": -0.1,
    "Action Smoothness Penalty": -0.2,
    "Feet Contact Force Penalty": -5e-4,
    "Stumbling Penalty": -20.0,
    "Feet Slippage Penalty": -2.0,
    "Joint Position Limit Penalty": -10.0,
    "Joint Velocity Limit Penalty": -10.0,
    "Torque Limit Penalty": -10.0,
    "Collision Penalty": -30.0,
    "Early Termination Penalty": -200.0,
}

N, NB = 6, 5
CONFIG = RewardConfig(vr_frames=(1, 2, 3), foot_frames=(3, 4))
LIMITS = JointLimits(np.full(N, -1.0), np.full(N, 1.0), np.full(N, 5.0), np.full(N, 50.0))


def perfect_inputs(rng):
    pos = rng.normal(size=(NB, 3))
    quat = np.array([quat_normalize(q) for q in rng.normal(size=(NB, 4))])
    lin, ang = rng.normal(size=(NB, 3)), rng.normal(size=(NB, 3))
    q = rng.uniform(-0.5, 0.5, N)
    qd = rng.normal(size=N)
    a = rng.normal(size=N)
    return RewardInputs(pos, quat, lin, ang, pos.copy(), quat.copy(), lin.copy(), ang.copy(), q, qd, q.copy(),
                        qd.copy(), np.zeros(N), a, a.copy(), a.copy(), foot_vel=np.zeros((2, 3)),
                        contacts=np.array([True, False]), ref_contacts=np.array([True, False]),
                        contact_normal=np.array([100.0, 0.0]), contact_lateral=np.zeros(2),
                        air_time_at_touchdown=np.zeros(2))


def random_inputs(rng):
    def quats():
        return np.array([quat_normalize(q) for q in rng.normal(size=(NB, 4))])

    contacts = rng.random(2) < 0.5
    return RewardInputs(
        rng.normal(size=(NB, 3)), quats(), rng.normal(size=(NB, 3)) * 3, rng.normal(size=(NB, 3)) * 10,
        rng.normal(size=(NB, 3)), quats(), rng.normal(size=(NB, 3)) * 3, rng.normal(size=(NB, 3)) * 10,
        rng.uniform(-2, 2, N), rng.normal(size=N) * 10, rng.uniform(-1, 1, N), rng.normal(size=N) * 10,
        rng.normal(size=N) * 100, rng.normal(size=N), rng.normal(size=N), rng.normal(size=N),
        foot_vel=rng.normal(size=(2, 3)), contacts=contacts, ref_contacts=rng.random(2) < 0.5,
        contact_normal=np.where(contacts, rng.uniform(0, 1000, 2), 0.0),
        contact_lateral=rng.uniform(0, 1000, 2) * contacts, air_time_at_touchdown=rng.uniform(0, 1, 2),
        collision=bool(rng.random() < 0.2), terminated_early=bool(rng.random() < 0.2),
    )


def test_weights_match_table():
    assert len(REWARD_TERMS) == 24
    assert {TERM_LABELS[name]: w for name, w in REWARD_TERMS} == REWARD_WEIGHTS


def test_zero_error_contributes_exact_weight(rng):
    out = compute_rewards(perfect_inputs(rng), CONFIG, SigmaState.default(), LIMITS)
    for name in KERNEL_TERMS:
        assert out.weighted[name] == dict(REWARD_TERMS)[name]
    assert out.weighted["vr_keypoint"] == 1.6
    assert out.weighted["alive"] == 0.2
    for name, w in REWARD_TERMS:
        if w < 0:
            assert out.weighted[name] == 0.0
    expected = sum(w for name, w in REWARD_TERMS if name in KERNEL_TERMS or name == "alive")
    assert out.total == pytest.approx(expected, abs=1e-12)


def test_total_is_weighted_sum(rng):
    for _ in range(200):
        out = compute_rewards(random_inputs(rng), CONFIG, SigmaState.default(), LIMITS)
        assert out.total == pytest.approx(sum(out.weighted.values()), abs=1e-12)
        for name in TERM_NAMES:
            assert out.weighted[name] == CONFIG.weights[name] * out.raw[name]


def test_penalties_never_positive(rng):
    for _ in range(2000):
        scale = float(rng.uniform(0, 1))
        out = compute_rewards(random_inputs(rng), CONFIG, SigmaState.default(), LIMITS, scale,
                              float(rng.uniform(0.5, 1.0)))
        for name, w in REWARD_TERMS:
            if w < 0:
                assert out.weighted[name] <= 0.0
            else:
                assert out.weighted[name] >= 0.0


def test_penalty_scale_multiplies_penalties_only(rng):
    inp = random_inputs(rng)
    a = compute_rewards(inp, CONFIG, SigmaState.default(), LIMITS, 1.0)
    b = compute_rewards(inp, CONFIG, SigmaState.default(), LIMITS, 0.05)
    for name, w in REWARD_TERMS:
        if w < 0:
            assert b.weighted[name] == pytest.approx(0.05 * a.weighted[name], rel=1e-12, abs=0)
        else:
            assert b.weighted[name] == a.weighted[name]


def test_kernel_at_sigma():
    assert abs(tracking_kernel(0.3, 0.3) - math.exp(-1)) <= 1e-15
    assert tracking_kernel(0.0, 2.0) == 1.0


@settings(max_examples=300, deadline=None)
@given(a=st.floats(0, 100), b=st.floats(0, 100), sigma=st.floats(1e-3, 10))
def test_kernel_monotone(a, b, sigma):
    lo, hi = min(a, b), max(a, b)
    assert tracking_kernel(hi, sigma) <= tracking_kernel(lo, sigma)
    assert 0.0 <= tracking_kernel(hi, sigma) <= 1.0


def test_kernel_domain():
    with pytest.raises(ValueError):
        tracking_kernel(1.0, 0.0)
    with pytest.raises(ValueError):
        tracking_kernel(-1.0, 1.0)


def test_early_termination_zeroes_alive(rng):
    inp = perfect_inputs(rng)
    inp.terminated_early = True
    out = compute_rewards(inp, CONFIG, SigmaState.default(), LIMITS)
    assert out.weighted["alive"] == 0.0
    assert out.weighted["early_termination"] == -200.0


def test_limit_band():
    np.testing.assert_allclose(soft_limit_violation(np.array([0.95, -0.95, 0.5]), -1.0, 1.0, 0.9), [0.05, 0.05, 0])


def test_joint_limit_penalty_engages_past_band(rng):
    inp = perfect_inputs(rng)
    inp.q[:] = 0.0
    inp.ref_q[:] = 0.0
    inp.q[0] = 0.95
    out = compute_rewards(inp, CONFIG, SigmaState.default(), LIMITS, limit_fraction=0.9)
    assert out.raw["joint_position_limit"] == pytest.approx(0.05)
    out = compute_rewards(inp, CONFIG, SigmaState.default(), LIMITS, limit_fraction=0.95)
    assert out.raw["joint_position_limit"] == 0.0


def test_action_rate_and_smoothness(rng):
    inp = perfect_inputs(rng)
    inp.action = np.ones(N)
    inp.prev_action = np.zeros(N)
    inp.prev_prev_action = np.zeros(N)
    out = compute_rewards(inp, CONFIG, SigmaState.default(), LIMITS)
    assert out.raw["action_rate"] == N
    assert out.raw["action_smoothness"] == N


def test_stumble_and_contact_force(rng):
    inp = perfect_inputs(rng)
    inp.contact_normal = np.array([400.0, 10.0])
    inp.contact_lateral = np.array([0.0, 25.0])
    out = compute_rewards(inp, CONFIG, SigmaState.default(), LIMITS)
    assert out.raw["feet_contact_force"] == 50.0 ** 2
    assert out.raw["stumbling"] == 1.0


def test_slippage_counts_only_stance_feet(rng):
    inp = perfect_inputs(rng)
    inp.foot_vel = np.array([[0.1, 0.2, 5.0], [3.0, 3.0, 0.0]])
    out = compute_rewards(inp, CONFIG, SigmaState.default(), LIMITS)
    assert out.raw["feet_slippage"] == pytest.approx(0.05)


def test_sigma_update_and_clamp():
    s = SigmaState.default(rate=0.5)
    s2 = update_sigma(s, {"body_position": 0.1})
    assert s2["body_position"] == pytest.approx(0.06)
    s3 = update_sigma(s, 1e6)
    for name, (_, lo, hi) in KERNEL_TERMS.items():
        assert s3[name] == hi
    s4 = update_sigma(SigmaState.default(rate=1.0), 0.0)
    for name, (_, lo, hi) in KERNEL_TERMS.items():
        assert s4[name] == lo


def test_sigma_update_rejects_negative():
    with pytest.raises(ValueError):
        update_sigma(SigmaState.default(), {"body_position": -1.0})


def test_config_validation_and_round_trip(tmp_path):
    with pytest.raises(ValueError, match="penalty"):
        RewardConfig(weights={"collision": 1.0})
    with pytest.raises(ValueError, match="unknown"):
        RewardConfig(weights={"bogus": 1.0})
    path = tmp_path / "r.json"
    path.write_text(json.dumps(CONFIG.to_dict()))
    assert load_reward_config(path) == CONFIG
    by_name = RewardConfig.from_dict({"weights": {"alive": 0.5}})
    by_label = RewardConfig.from_dict({"weights": {"Alive Bonus": 0.5}})
    assert by_name.weights["alive"] == by_label.weights["alive"] == 0.5


def test_for_model_frames(humanoid):
    cfg = RewardConfig.for_model(humanoid)
    assert [humanoid.frame_names[i] for i in cfg.vr_frames] == ["head", "left_wrist", "right_wrist"]
    assert [humanoid.frame_names[i] for i in cfg.foot_frames] == ["left_foot", "right_foot"]


def test_csv_row(rng):
    out = compute_rewards(perfect_inputs(rng), CONFIG, SigmaState.default(), LIMITS)
    header = RewardBreakdown.csv_header().split(",")
    row = out.csv_row(3).split(",")
    assert len(header) == len(row) == 26
    assert float(row[-1]) == out.total


def test_air_time_tracker():
    tr = FeetAirTracker(1)
    dt = 0.02
    outs = [tr.update([c], dt)[0] for c in [True, False, False, False, True, True]]
    assert outs[:4] == [0, 0, 0, 0]
    assert outs[4] == pytest.approx(3 * dt)
    assert outs[5] == 0.0


def test_mismatched_lengths_rejected(rng):
    inp = perfect_inputs(rng)
    inp.qd = np.zeros(N + 1)
    with pytest.raises(ValueError, match="qd"):
        compute_rewards(inp, CONFIG, SigmaState.default(), LIMITS)
