"""Time every kernel on its numba and numpy paths, plus one full training episode.

    python benchmarks/bench_kernels.py [--repeat N]

The episode timing uses whichever backend is active; run once with
KNOWSR_DISABLE_NUMBA=1 to get the numpy-only figure.
"""

import argparse
import timeit

import numpy as np

from knowsr import kernels
from knowsr.env_mpe import WorldConfig
from knowsr.maddpg import RunStreams, TrainConfig, collect_episode, make_agents
from knowsr.nn_core import init_mlp


def _cases(n_agents: int):
    rng = np.random.default_rng(0)
    pos, vel = rng.uniform(-1, 1, (n_agents, 2)), rng.normal(size=(n_agents, 2))
    act, lm = rng.normal(size=(n_agents, 5)), rng.uniform(-1, 1, (n_agents, 2))
    d = 4 + 4 * n_agents - 2
    net = init_mlp([d, 64, 64, 64, 5], rng)
    x = rng.normal(size=(1, d))
    w, b = tuple(net.weights), tuple(net.biases)
    return {
        "integrate": (lambda: kernels.integrate_nb(pos, vel, act, 5.0, 0.1, 0.25),
                      lambda: kernels.integrate_np(pos, vel, act, 5.0, 0.1, 0.25)),
        "spread_reward": (lambda: kernels.spread_reward_nb(pos, lm, 0.15, 1.0),
                          lambda: kernels.spread_reward_np(pos, lm, 0.15, 1.0)),
        "observations": (lambda: kernels.observations_nb(pos, vel, lm),
                         lambda: kernels.observations_np(pos, vel, lm)),
        "actor_forward_1row": (lambda: kernels.relu_mlp_forward_nb(x, w, b),
                               lambda: kernels.relu_mlp_forward_np(x, net.weights, net.biases)),
    }


def _best(fn, repeat: int, number: int) -> float:
    fn()  # compile / warm caches
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=2000)
    args = ap.parse_args(argv)

    print(f"active backend: {kernels.backend()}")
    print(f"{'kernel':<22}{'agents':>7}{'numba us':>11}{'numpy us':>11}{'speedup':>9}")
    for n in (3, 8):
        for name, (nb, npy) in _cases(n).items():
            t_nb = _best(nb, args.repeat, args.number) * 1e6
            t_np = _best(npy, args.repeat, args.number) * 1e6
            print(f"{name:<22}{n:>7}{t_nb:>11.2f}{t_np:>11.2f}{t_np / t_nb:>8.1f}x")

    env = WorldConfig()
    agents = make_agents(env, TrainConfig(), 0)
    streams = RunStreams.from_seed(0)
    t = _best(lambda: collect_episode(agents, env, 0.1, streams), args.repeat, 20)
    print(f"one 3-agent episode rollout ({kernels.backend()}): {t * 1e3:.2f} ms")


if __name__ == "__main__":
    main()
