import numpy as np
import pytest

from clot.curriculum import CurriculumState
from clot.pipeline import LoopConfig, PolicyAction, RateConfig, run_closed_loop
from clot.pipeline.env import EnvConfig, TrackingEnv
from clot.pipeline.loop import ClipSource, MailboxSource, PolicyError, SourceExhausted
from clot.pipeline.scheduler import FIRE_ORDER, count_events, schedule
from clot.pipeline.stream import LatestWins
from clot.pipeline.wire import WireFrame
from clot.retarget import ReferenceTrajectory
from clot.sim import DomainRandConfig
from clot.synthetic import humanoid_walk, planar_sweep


@pytest.fixture(scope="module")
def sweep(planar):
    return planar_sweep(planar, fps=50.0, duration=1.0)


@pytest.fixture(scope="module")
def walk_ref(humanoid):
    clip = humanoid_walk(humanoid, duration=1.0, fps=50.0, include_joints=True)
    return ReferenceTrajectory.from_clip(humanoid, clip)


def test_default_rates():
    rates = RateConfig()
    assert rates.base_hz == 1200
    assert [rates.period(e) for e in FIRE_ORDER] == [10, 24, 3]
    assert rates.physics_per_control == 8
    assert count_events(rates, rates.num_ticks(10.0)) == {"mocap": 1200, "control": 500, "physics": 4000}


def test_fire_order_within_tick():
    events = dict(schedule(RateConfig(), 1200))
    assert events[0] == ("mocap", "control", "physics")
    assert events[120] == ("mocap", "control", "physics")
    assert events[24] == ("control", "physics")
    assert 1 not in events


def test_rate_validation():
    with pytest.raises(ValueError, match="whole number"):
        RateConfig().num_ticks(1.0 / 7)
    with pytest.raises(ValueError):
        RateConfig(mocap_hz=0)
    with pytest.raises(ValueError):
        RateConfig(mocap_hz=120, control_hz=50, physics_hz=120).physics_per_control


def test_closed_loop_counts_and_tracking(planar, sweep):
    report = run_closed_loop(planar, sweep)
    assert report.ticks == {"base": 1200, "mocap": 120, "control": 50, "physics": 400}
    assert report.termination.reason == "clip_end" and not report.termination.early
    assert report.metrics.e_mdp < 0.01
    assert report.control_steps == len(report.robot) == 50


def test_closed_loop_is_byte_identical(planar, sweep):
    cfg = LoopConfig(randomization=DomainRandConfig())
    a = run_closed_loop(planar, sweep, config=cfg, seed=3)
    b = run_closed_loop(planar, sweep, config=cfg, seed=3)
    assert a.to_json() == b.to_json()
    assert a.pair.q.tobytes() == b.pair.q.tobytes()
    c = run_closed_loop(planar, sweep, config=cfg, seed=4)
    assert c.pair.q.tobytes() != a.pair.q.tobytes()


def test_observer_sees_zero_delta_and_root_error(planar, sweep):
    seen = []
    run_closed_loop(planar, sweep, observer=seen.append)
    assert len(seen) == 50
    assert all(r.delta == 0 for r in seen)
    assert "root_error" in seen[0].observation.layout.slices
    np.testing.assert_allclose(seen[3].observation.block("root_error"), seen[3].root_error)


def test_explicit_duration(planar, sweep):
    report = run_closed_loop(planar, sweep, config=LoopConfig(duration=0.5))
    assert report.ticks["control"] == 25


def test_source_exhausted(planar, sweep):
    with pytest.raises(SourceExhausted):
        run_closed_loop(planar, sweep, config=LoopConfig(duration=2.0))
    src = ClipSource(sweep)
    assert src.frame(sweep.duration).t == sweep.frames[-1].t


def test_bad_policy(planar, sweep):
    with pytest.raises(PolicyError, match="invalid action"):
        run_closed_loop(planar, sweep, policy=lambda obs, ref: PolicyAction(np.full(planar.n, np.nan)))
    with pytest.raises(PolicyError, match="step 0"):
        run_closed_loop(planar, sweep, policy=lambda obs, ref: 1 / 0)


def test_loop_config_round_trip(planar):
    cfg = LoopConfig(randomization=DomainRandConfig(), penalty_scale=0.5).resolved(planar)
    again = LoopConfig.from_dict(cfg.to_dict(), planar).resolved(planar)
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(ValueError, match="target_hold"):
        LoopConfig(target_hold="nope").resolved(planar)


def test_mailbox_source_holds_last_frame():
    box = LatestWins()
    src = MailboxSource(box, first_frame_timeout=0.01)
    with pytest.raises(SourceExhausted):
        src.frame(0.0)
    box.put(WireFrame(1000, [1, 0, 0, 0, 0, 0, 0], np.zeros((1, 3))))
    box.put(WireFrame(2000, [1, 0, 0, 0, 0, 0, 0], np.ones((1, 3))))
    assert box.dropped == 1
    assert src.frame(0.0).t == 0.002
    assert src.frame(0.1).t == 0.002 and src.held == 1


def test_live_source_needs_duration(planar):
    with pytest.raises(ValueError, match="duration"):
        run_closed_loop(planar, MailboxSource(LatestWins()))


def run_env(model, ref, delta, seed=5, steps=30, curriculum=None):
    env = TrackingEnv(model, ref, EnvConfig(), curriculum=curriculum)
    obs = env.reset(seed=seed, delta=delta)
    rewards, observations = [], [obs]
    for _ in range(steps):
        out = env.step(env.reference_action())
        rewards.append(out.reward)
        observations.append(out.obs)
        if out.termination.terminated:
            break
    return rewards, observations, env


def test_env_rewards_are_delta_invariant(humanoid, walk_ref):
    base, obs0, _ = run_env(humanoid, walk_ref, 0)
    shifted, obs1, _ = run_env(humanoid, walk_ref, 17)
    assert len(base) == len(shifted) == 30
    for a, b in zip(base, shifted):
        assert abs(a.total - b.total) < 1e-15
    layout = obs0[0].layout
    assert obs0[5].block("future_ref_pos").tobytes() != obs1[5].block("future_ref_pos").tobytes()
    for name, _ in layout.blocks:
        if name not in layout.goal_blocks:
            assert obs0[5].block(name).tobytes() == obs1[5].block(name).tobytes()


def test_env_reset_is_reproducible(humanoid, walk_ref):
    a, _, env_a = run_env(humanoid, walk_ref, None, seed=9, steps=10)
    b, _, env_b = run_env(humanoid, walk_ref, None, seed=9, steps=10)
    assert env_a.delta == env_b.delta
    assert [r.total for r in a] == [r.total for r in b]


def test_env_reaches_clip_end(humanoid, walk_ref):
    rewards, _, env = run_env(humanoid, walk_ref, 0, steps=200)
    assert len(rewards) == len(walk_ref) - 1
    assert env.t == len(walk_ref) - 1


def test_env_critic_and_action_checks(humanoid, walk_ref):
    env = TrackingEnv(humanoid, walk_ref)
    obs = env.reset(seed=0)
    assert len(env.critic_observation()) > obs.layout.size
    with pytest.raises(ValueError, match="invalid action"):
        env.step(np.zeros(humanoid.n + 1))
    with pytest.raises(ValueError):
        TrackingEnv(humanoid, walk_ref, EnvConfig(physics_hz=430))


def test_env_curriculum_scales_penalties(humanoid, walk_ref):
    hard = CurriculumState()
    for _ in range(100_000):
        hard.update(1.0)
    easy_rewards, _, _ = run_env(humanoid, walk_ref, 0, steps=5)
    hard_rewards, _, _ = run_env(humanoid, walk_ref, 0, steps=5, curriculum=hard)
    ratio = hard.current("reward_penalty") / CurriculumState().current("reward_penalty")
    a, b = easy_rewards[0].weighted["action_rate"], hard_rewards[0].weighted["action_rate"]
    assert b == pytest.approx(ratio * a, rel=1e-9)
