"""Central finite-difference checks of every analytic gradient in the package."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .maddpg import actor_loss_and_grads, critic_input, critic_loss_and_grads, to_action
from .nn_core import Gradients, MlpParams, _forward_cached, init_mlp, mlp_backward, mlp_forward
from .sharing import AdviceBatch, share_loss_and_grads

FD_EPS = 1e-5
REL_TOL = 1e-4
# denominators below this are treated as this; avoids dividing roundoff by ~0
DENOM_FLOOR = 1e-7
# toy problems with a ReLU pre-activation closer than this to 0 are redrawn:
# a finite difference straddling the hinge measures the kink, not the gradient
KINK_MARGIN = 1e-3


def numeric_gradients(loss_fn: Callable[[], float], params: MlpParams, eps: float = FD_EPS) -> list[np.ndarray]:
    """Central differences of ``loss_fn`` w.r.t. every entry of ``params`` (in place, restored)."""
    out = []
    for p in params.tensors():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = loss_fn()
            flat[j] = orig - eps
            down = loss_fn()
            flat[j] = orig
            gflat[j] = (up - down) / (2 * eps)
        out.append(g)
    return out


def max_relative_error(analytic: Gradients | list[np.ndarray], numeric: list[np.ndarray]) -> float:
    a_list = analytic.tensors() if isinstance(analytic, Gradients) else analytic
    worst = 0.0
    for a, n in zip(a_list, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), DENOM_FLOOR)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def _clear_of_kinks(net: MlpParams, x: np.ndarray) -> bool:
    _, (_, pre) = _forward_cached(net, x)
    return all(np.min(np.abs(z)) > KINK_MARGIN
               for z, act in zip(pre, net.activations) if act == "relu")


def _toy_net(rng, in_dim, out_dim):
    depth = int(rng.integers(1, 4))
    hidden = [int(rng.integers(2, 9)) for _ in range(depth - 1)]
    return init_mlp([in_dim, *hidden, out_dim], rng)


def check_forward(rng) -> float:
    """Random scalar functional ``sum(w * f(x))`` of a small MLP."""
    while True:
        net = _toy_net(rng, 3, 2)
        x = rng.normal(size=(4, 3))
        if _clear_of_kinks(net, x):
            break
    w = rng.normal(size=(4, 2))
    analytic = mlp_backward(net, x, w)
    numeric = numeric_gradients(lambda: float(np.sum(w * mlp_forward(net, x))), net)
    return max_relative_error(analytic, numeric)


def check_critic(rng) -> float:
    while True:
        critic = _toy_net(rng, 6, 1)
        x = rng.normal(size=(5, 6))
        if _clear_of_kinks(critic, x):
            break
    y = rng.normal(size=(5, 1))
    _, analytic = critic_loss_and_grads(critic, x, y)
    numeric = numeric_gradients(lambda: critic_loss_and_grads(critic, x, y)[0], critic)
    return max_relative_error(analytic, numeric)


def check_actor(rng, squash: str = "softmax", logit_reg: float = 0.0) -> float:
    n_agents, obs_dim, b = 2, 3, 4
    while True:
        actor = _toy_net(rng, obs_dim, 5)
        critic = _toy_net(rng, n_agents * (obs_dim + 5), 1)
        obs = rng.normal(size=(b, n_agents, obs_dim))
        actions = rng.normal(size=(b, n_agents, 5))
        index = int(rng.integers(n_agents))
        joint = actions.copy()
        joint[:, index] = to_action(mlp_forward(actor, obs[:, index]), squash)
        if _clear_of_kinks(actor, obs[:, index]) and _clear_of_kinks(critic, critic_input(obs, joint)):
            break

    def f():
        return actor_loss_and_grads(actor, critic, index, obs, actions, squash, logit_reg)[0]

    _, analytic = actor_loss_and_grads(actor, critic, index, obs, actions, squash, logit_reg)
    return max_relative_error(analytic, numeric_gradients(f, actor))


class _Nets:
    def __init__(self, actor):
        self.actor = actor


def check_share(rng, loss: str = "mse", temperature: float = 1.0) -> float:
    obs_dim, b = 3, 4
    while True:
        own = _toy_net(rng, obs_dim, 5)
        obs = rng.normal(size=(b, obs_dim))
        if _clear_of_kinks(own, obs):
            break
    peers = {k: mlp_forward(_toy_net(rng, obs_dim, 5), obs) * 2.0 for k in (1, 2)}
    advice = AdviceBatch(obs, peers)
    nets = _Nets(own)
    _, analytic = share_loss_and_grads(nets, advice, loss, temperature)
    numeric = numeric_gradients(lambda: share_loss_and_grads(nets, advice, loss, temperature)[0], own)
    return max_relative_error(analytic, numeric)


CHECKS: dict[str, Callable[[np.random.Generator], float]] = {
    "mlp_forward": check_forward,
    "critic_mse": check_critic,
    "actor_neg_q": check_actor,
    "actor_neg_q_raw": lambda rng: check_actor(rng, squash="none"),
    "actor_neg_q_reg": lambda rng: check_actor(rng, logit_reg=1e-2),
    "share_mse": check_share,
    "share_kd_T1": lambda rng: check_share(rng, "kd", 1.0),
    "share_kd_T2": lambda rng: check_share(rng, "kd", 2.0),
    "share_kd_T5": lambda rng: check_share(rng, "kd", 5.0),
}


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    n_nets: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < REL_TOL


def run_suite(n_nets: int = 20, seed: int = 0, names=None) -> list[CheckResult]:
    """Every check on ``n_nets`` independently drawn toy networks."""
    results = []
    for k, name in enumerate(names or CHECKS):
        rng = np.random.default_rng([seed, k])
        worst = max(CHECKS[name](rng) for _ in range(n_nets))
        results.append(CheckResult(name, worst, n_nets))
    return results
