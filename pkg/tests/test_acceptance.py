"""One test per acceptance criterion; each records a PASS/FAIL line shown at the end of the run."""

import os
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE
from knowsr.cli import main
from knowsr.config import load_config
from knowsr.env_mpe import ACTION_DIM, WorldConfig, WorldState, rewards, step
from knowsr.gradcheck import REL_TOL, run_suite
from knowsr.harness import reach_episode, run_campaign, seed_mean
from knowsr.maddpg import TrainConfig, make_agents, train
from knowsr.nn_core import kl_divergence, mse_share_loss, softmax_with_temperature
from knowsr.sharing import ShareSchedule, collect_advice, run_training, share_slot

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _record(k: int, ok: bool, title: str, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {k}: {title} -- {detail}"
    ACCEPTANCE[k] = line
    print(line)


def _params(agents) -> bytes:
    return b"".join(t.tobytes() for a in agents for p in a.named().values() for t in p.tensors())


def test_c1_gradient_suite():
    results = run_suite(n_nets=20, seed=0)
    worst = max(r.max_rel_error for r in results)
    ok = all(r.passed for r in results) and all(r.n_nets >= 20 for r in results)
    _record(1, ok, "gradient suite", f"{len(results)} checks x 20 nets, worst rel err {worst:.2e} < {REL_TOL:g}")
    assert ok


def test_c2_loss_units():
    p = softmax_with_temperature(np.array([1.0, 0.0]))
    kl = kl_divergence(np.array([0.5, 0.5]), np.array([0.25, 0.75]))
    mse = mse_share_loss(np.array([1.0, 2.0]), np.array([3.0, 4.0]))
    ok = (np.allclose(p, [0.73106, 0.26894], rtol=0, atol=1e-5) and abs(kl - 0.14384) <= 1e-5 and mse == 4.0)
    _record(2, ok, "loss unit values", f"softmax {p.round(5).tolist()}, KL {kl:.5f}, MSE {mse!r}")
    assert ok


def test_c3_degenerate_schedule():
    env, cfg = WorldConfig(), TrainConfig()
    trail_a, trail_b = [], []
    a = run_training(env, cfg, ShareSchedule(share_steps=0), 7, 50,
                     on_episode=lambda e, ag: trail_a.append(_params(ag)))
    b = train(env, cfg, 7, 50, on_episode=lambda e, ag: trail_b.append(_params(ag)))
    updates = a.records[-1].self_updates
    ok = trail_a == trail_b and len(trail_a) == 50 and updates > 0
    ok &= [r.avg_step_reward for r in a.records] == [r.avg_step_reward for r in b.records]
    _record(3, ok, "share_steps=0 equals MADDPG", f"50 episodes, {updates} update slots, per-episode params bit-equal")
    assert ok


def test_c4_consensus_fixed_point():
    env, cfg = WorldConfig(), TrainConfig()
    agents = make_agents(env, cfg, 0)
    for a in agents[1:]:
        a.actor = agents[0].actor.copy()
    before = _params(agents)
    rng = np.random.default_rng(1)
    losses = []
    for _ in range(100):
        chunk = _random_chunk(rng, env, 64)
        losses.extend(share_slot(agents, chunk, ShareSchedule(), cfg))
    ok = _params(agents) == before and all(v == 0.0 for v in losses)
    _record(4, ok, "consensus fixed point", f"100 share slots, max loss {max(losses)!r}, params bit-unchanged")
    assert ok


def _random_chunk(rng, env, size):
    from knowsr.replay_buffer import Batch

    n, d = env.n_agents, env.obs_dim
    return Batch(rng.normal(size=(size, n, d)), rng.normal(size=(size, n, ACTION_DIM)),
                 rng.normal(size=(size, n)), rng.normal(size=(size, n, d)), np.zeros(size))


@pytest.mark.slow
def test_c5_desk_convergence(tmp_path):
    cfg = load_config(CONFIGS / "desk.toml", str(tmp_path))
    res = run_campaign(cfg)
    base, know = res.summaries
    base_final, know_final = base.final_smoothed_reward, know.final_smoothed_reward
    base_fb = base.first_best_episode
    reach = reach_episode(seed_mean(res.records[know.variant]), base_final, cfg.smoothing_window)
    ok_a = know_final >= base_final
    ok_b = reach is not None and reach <= 0.8 * base_fb
    detail = (f"(a) final smoothed {know_final:.4f} vs MADDPG {base_final:.4f}: {'ok' if ok_a else 'no'}; "
              f"(b) reaches MADDPG final at episode {reach} vs 0.8 x {base_fb} = {0.8 * base_fb:.0f}: "
              f"{'ok' if ok_b else 'no'}")
    _record(5, ok_a and ok_b, "desk-scale 7-3KnowSR vs MADDPG", detail)
    assert ok_a, detail
    assert ok_b, detail


@pytest.mark.skipif(os.environ.get("KNOWSR_RUN_GRID") != "1", reason="multi-hour grid; set KNOWSR_RUN_GRID=1")
def test_c6_grid_ordering(tmp_path):
    cfg = load_config(CONFIGS / "grid8.toml", str(tmp_path))
    res = run_campaign(cfg)
    base = next(s for s in res.summaries if s.variant == "MADDPG")
    others = [s for s in res.summaries if s.variant != "MADDPG"]
    ok = all(s.mean_step_reward > base.mean_step_reward and s.first_best_episode < base.first_best_episode
             for s in others)
    _record(6, ok, "8-agent grid ordering", f"{sum(s.mean_step_reward > base.mean_step_reward for s in others)}"
            f"/{len(others)} better on reward")
    assert ok


def test_c6_not_gated_note():
    if os.environ.get("KNOWSR_RUN_GRID") != "1":
        ACCEPTANCE[6] = "[SKIP] criterion 6: 8-agent grid ordering -- documented, not gated (KNOWSR_RUN_GRID=1 runs it)"


def test_c7_physics():
    cfg = WorldConfig(n_agents=2, n_landmarks=2, force_scale=1.0, dt=0.1, damping=0.25)
    s = WorldState(np.array([[0.0, 0.0], [0.5, 0.5]]), np.zeros((2, 2)), np.array([[0.01, 0.0], [0.5, 0.5]]))
    act = np.zeros((2, ACTION_DIM))
    act[0, 1] = 1.0
    nxt, r, _ = step(s, act, cfg)
    v_err = np.max(np.abs(nxt.agent_vel[0] - [0.1, 0.0]))
    p_err = np.max(np.abs(nxt.agent_pos[0] - [0.01, 0.0]))
    covered = WorldState(nxt.landmark_pos.copy(), np.zeros((2, 2)), nxt.landmark_pos)
    r_cov, _ = rewards(covered, cfg)
    ok = v_err <= 1e-12 and p_err <= 1e-12 and np.all(r_cov == 0) and np.all(r < 0)
    _record(7, ok, "physics", f"|dv| {v_err:.1e}, |dp| {p_err:.1e}, covered reward {r_cov.tolist()}")
    assert ok


def test_c8_determinism(tmp_path, capsys):
    cfg = CONFIGS / "smoke.toml"
    for d in ("a", "b"):
        assert main(["train", "--config", str(cfg), "--seed", "11", "--out", str(tmp_path / d)]) == 0
    capsys.readouterr()
    a = (tmp_path / "a" / "MADDPG__seed11.csv").read_bytes()
    b = (tmp_path / "b" / "MADDPG__seed11.csv").read_bytes()
    ok = a == b and len(a) > 0
    _record(8, ok, "train determinism", f"two runs, {len(a)} bytes, byte-identical={a == b}")
    assert ok
