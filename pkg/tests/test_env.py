import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from knowsr.env_mpe import (ACTION_DIM, WorldConfig, WorldState, dump_trajectory, episode_rollout,
                            observe, observe_all, reset, rewards, step)
from knowsr.errors import ConfigError, DimensionError, StateError

coords = st.floats(-3, 3, allow_nan=False)


def _state(agents, landmarks, vel=None):
    agents = np.asarray(agents, dtype=float)
    vel = np.zeros_like(agents) if vel is None else np.asarray(vel, dtype=float)
    return WorldState(agents, vel, np.asarray(landmarks, dtype=float), 0)


def test_config_validation():
    for bad in ({"n_agents": 1}, {"max_steps": 0}, {"dt": 0.0}, {"damping": 1.0}, {"damping": -0.1}):
        with pytest.raises(ConfigError):
            WorldConfig(**bad)


def test_obs_dim_formula():
    assert WorldConfig().obs_dim == 14
    assert WorldConfig(n_agents=6, n_landmarks=6).obs_dim == 26
    s = reset(WorldConfig(n_agents=6, n_landmarks=6), 0)
    assert observe(s, 3).shape == (26,)


def test_reset_determinism_and_range():
    cfg = WorldConfig(world_extent=0.7)
    a, b = reset(cfg, 11), reset(cfg, 11)
    assert np.array_equal(a.agent_pos, b.agent_pos) and np.array_equal(a.landmark_pos, b.landmark_pos)
    assert not np.array_equal(a.landmark_pos, reset(cfg, 12).landmark_pos)
    assert np.all(np.abs(a.agent_pos) <= 0.7) and np.all(np.abs(a.landmark_pos) <= 0.7)
    assert np.all(a.agent_vel == 0) and a.t == 0


def test_one_step_hand_integration():
    cfg = WorldConfig(n_agents=2, n_landmarks=1, force_scale=1.0, dt=0.1, damping=0.25)
    s = _state([[0, 0], [0.9, 0.9]], [[0.5, 0.5]])
    act = np.zeros((2, ACTION_DIM))
    act[0, 1] = 1.0
    nxt, _, _ = step(s, act, cfg)
    np.testing.assert_allclose(nxt.agent_vel[0], [0.1, 0.0], rtol=0, atol=1e-12)
    np.testing.assert_allclose(nxt.agent_pos[0], [0.01, 0.0], rtol=0, atol=1e-12)


def test_zero_action_is_static():
    cfg = WorldConfig()
    s = reset(cfg, 3)
    nxt, _, done = step(s, np.zeros((3, ACTION_DIM)), cfg)
    assert np.array_equal(nxt.agent_pos, s.agent_pos) and nxt.t == 1 and not done


def test_step_after_done_raises():
    cfg = WorldConfig(max_steps=2)
    s = reset(cfg, 0)
    zero = np.zeros((3, ACTION_DIM))
    s, _, d1 = step(s, zero, cfg)
    s, _, d2 = step(s, zero, cfg)
    assert (d1, d2) == (False, True)
    with pytest.raises(StateError):
        step(s, zero, cfg)


def test_bad_action_shape():
    cfg = WorldConfig()
    with pytest.raises(DimensionError):
        step(reset(cfg, 0), np.zeros((3, 4)), cfg)


def test_observe_layout_and_bounds():
    s = _state([[0, 0], [2, -1]], [[1, 2]], vel=[[0.3, 0.4], [0, 0]])
    o = observe(s, 0)
    np.testing.assert_array_equal(o, [0.3, 0.4, 0, 0, 1, 2, 2, -1])
    np.testing.assert_array_equal(observe(s, 1)[4:], [-1, 3, -2, 1])
    with pytest.raises(IndexError):
        observe(s, 2)


def test_covered_landmarks_give_zero_reward():
    cfg = WorldConfig(n_agents=3, n_landmarks=3)
    lm = [[-0.8, 0], [0, 0.8], [0.8, 0]]
    r, shared = rewards(_state(lm, lm), cfg)
    assert shared == 0.0 and np.all(r == 0.0)
    r, shared = rewards(_state([[-0.8, 0], [0, 0.8], [0.8, 0.1]], lm), cfg)
    assert shared < 0


def test_collision_hits_only_colliders():
    cfg = WorldConfig(n_agents=3, n_landmarks=1)
    r, shared = rewards(_state([[0, 0], [0.2, 0], [1, 1]], [[0, 0]]), cfg)
    np.testing.assert_allclose(r, [shared - 1, shared - 1, shared])


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (3, 2), elements=coords), arrays(np.float64, (3, 2), elements=coords))
def test_shared_term_bounds(agents, lms):
    _, shared = rewards(_state(agents, lms), WorldConfig())
    assert shared <= 0.0
    covered = all(np.any(np.all(agents == l, axis=1)) for l in lms)
    assert (shared == 0.0) == covered


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 2), elements=coords), arrays(np.float64, (3, 2), elements=coords),
       st.permutations(range(3)))
def test_shared_term_permutation_invariant(agents, lms, perm):
    cfg = WorldConfig()
    _, a = rewards(_state(agents, lms), cfg)
    _, b = rewards(_state(agents[list(perm)], lms), cfg)
    assert a == pytest.approx(b, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 2), elements=coords), arrays(np.float64, (3, 2), elements=coords),
       arrays(np.float64, (2,), elements=coords))
def test_translation_moves_only_own_position(agents, lms, off):
    s = _state(agents, lms)
    a, b = observe_all(s), observe_all(s.translated(off))
    np.testing.assert_allclose(b[:, 2:4] - a[:, 2:4], np.broadcast_to(off, (3, 2)), atol=1e-12)
    np.testing.assert_allclose(b[:, 4:], a[:, 4:], atol=1e-12)
    np.testing.assert_array_equal(b[:, :2], a[:, :2])


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 2), elements=st.floats(-5, 5)), st.integers(1, 10))
def test_zero_force_speed_non_increasing(vel, n):
    cfg = WorldConfig()
    s = _state(np.zeros((3, 2)), [[0, 0]], vel=vel)
    speed = np.linalg.norm(vel, axis=1)
    for _ in range(n):
        s, _, _ = step(s, np.zeros((3, ACTION_DIM)), cfg)
        new = np.linalg.norm(s.agent_vel, axis=1)
        assert np.all(new <= speed)
        speed = new


def test_observe_after_step_tracks_positions():
    cfg = WorldConfig()
    s = reset(cfg, 5)
    nxt, _, _ = step(s, np.random.default_rng(0).normal(size=(3, ACTION_DIM)), cfg)
    np.testing.assert_array_equal(observe_all(nxt)[:, 2:4], nxt.agent_pos)


def test_static_rollout():
    cfg = WorldConfig()
    still = [lambda o: np.zeros(ACTION_DIM)] * 3
    roll = episode_rollout(still, cfg, 9)
    s0 = reset(cfg, 9)
    _, shared0 = rewards(s0, cfg)
    r0, _ = rewards(s0, cfg)
    assert len(roll.transitions) == cfg.max_steps
    assert roll.avg_step_reward == pytest.approx(float(np.mean(r0)), abs=1e-12)
    if np.all(r0 == shared0):
        assert roll.avg_step_reward == pytest.approx(shared0, abs=1e-12)
    assert roll.transitions[-1].done and not any(t.done for t in roll.transitions[:-1])


def test_rollout_determinism():
    cfg = WorldConfig()
    pol = [lambda o, k=k: np.tanh(o[:ACTION_DIM] * (k + 1)) for k in range(3)]
    a, b = episode_rollout(pol, cfg, 4), episode_rollout(pol, cfg, 4)
    for x, y in zip(a.transitions, b.transitions):
        assert np.array_equal(x.obs, y.obs) and np.array_equal(x.rewards, y.rewards)


def test_rollout_wrong_policy_count():
    with pytest.raises(DimensionError):
        episode_rollout([lambda o: np.zeros(5)], WorldConfig(), 0)


def test_trajectory_dump(tmp_path):
    cfg = WorldConfig(max_steps=4)
    roll = episode_rollout([lambda o: np.ones(ACTION_DIM)] * 3, cfg, 0, keep_states=True)
    path = tmp_path / "traj.jsonl"
    dump_trajectory(path, roll)
    lines = [json.loads(l) for l in path.read_text().splitlines()]
    assert [l["t"] for l in lines] == [0, 1, 2, 3]
    assert lines[-1]["agent_pos"] == roll.states[-1].agent_pos.tolist()
    with pytest.raises(StateError):
        dump_trajectory(path, episode_rollout([lambda o: np.zeros(5)] * 3, cfg, 0))
