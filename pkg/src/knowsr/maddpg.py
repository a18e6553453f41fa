"""MADDPG: decentralised actors, per-agent centralised critics, soft targets."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import env_mpe
from .env_mpe import ACTION_DIM, WorldConfig
from .errors import ConfigError, DimensionError, NumericError
from .nn_core import (MlpParams, clip_by_global_norm, init_mlp, mlp_backward, mlp_forward,
                      optimizer_step, save_checkpoint, softmax_with_temperature)
from .replay_buffer import Batch, ReplayBuffer, ordered_chunks, stack


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.95
    tau: float = 0.01
    lr_actor: float = 1e-2
    lr_critic: float = 1e-2
    batch_size: int = 1024
    chunk_size: int = 256
    update_every: int = 4
    noise_initial: float = 0.3
    noise_final: float = 0.05
    noise_decay_fraction: float = 0.25
    hidden_units: int = 64
    n_layers: int = 4
    grad_clip: float | None = 0.5
    bootstrap_critic: bool = True
    action_squash: str = "softmax"
    actor_logit_reg: float = 1e-3  # keeps the softmax head out of saturation
    buffer_capacity: int = 1_000_000
    checkpoint_every: int = 0

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ConfigError("gamma must lie in [0, 1)")
        if not 0 < self.tau <= 1:
            raise ConfigError("tau must lie in (0, 1]")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise ConfigError("learning rates must be positive")
        if self.batch_size < 1 or self.chunk_size < 1 or self.update_every < 1:
            raise ConfigError("batch_size, chunk_size and update_every must be >= 1")
        if self.n_layers < 1 or self.hidden_units < 1:
            raise ConfigError("network must have >= 1 layer and >= 1 unit")
        if self.action_squash not in ("softmax", "none"):
            raise ConfigError("action_squash must be 'softmax' or 'none'")

    def noise_scale(self, episode: int, total_episodes: int) -> float:
        """Linear anneal from ``noise_initial`` to ``noise_final`` (episodes are 1-based)."""
        horizon = max(1.0, self.noise_decay_fraction * total_episodes)
        frac = min(1.0, (episode - 1) / horizon)
        return self.noise_initial + frac * (self.noise_final - self.noise_initial)


@dataclass
class AgentNets:
    index: int
    actor: MlpParams
    critic: MlpParams
    target_actor: MlpParams
    target_critic: MlpParams

    def named(self) -> dict[str, MlpParams]:
        return {"actor": self.actor, "critic": self.critic,
                "target_actor": self.target_actor, "target_critic": self.target_critic}


def _sizes(in_dim, out_dim, config: TrainConfig):
    return [in_dim] + [config.hidden_units] * (config.n_layers - 1) + [out_dim]


def make_agents(env_config: WorldConfig, config: TrainConfig, rng) -> list[AgentNets]:
    """Independently initialised networks for every agent; targets start as copies."""
    rng = np.random.default_rng(rng)
    n, d = env_config.n_agents, env_config.obs_dim
    critic_in = n * d + n * ACTION_DIM
    agents = []
    for i in range(n):
        actor = init_mlp(_sizes(d, ACTION_DIM, config), rng)
        critic = init_mlp(_sizes(critic_in, 1, config), rng)
        agents.append(AgentNets(i, actor, critic, actor.copy(), critic.copy()))
    return agents


def critic_input(obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Centralised critic input ``[obs_1 .. obs_N, act_1 .. act_N]`` per row."""
    b = obs.shape[0]
    return np.concatenate([obs.reshape(b, -1), actions.reshape(b, -1)], axis=1)


def split_critic_input(x: np.ndarray, n_agents: int, obs_dim: int):
    """Inverse of :func:`critic_input`."""
    b = x.shape[0]
    cut = n_agents * obs_dim
    return x[:, :cut].reshape(b, n_agents, obs_dim), x[:, cut:].reshape(b, n_agents, ACTION_DIM)


def act(nets: AgentNets, obs, noise_scale: float, rng) -> np.ndarray:
    """Actor logits for one observation plus N(0, noise_scale^2) per entry."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape[-1] != nets.actor.in_dim:
        raise DimensionError(f"observation dim {obs.shape[-1]} != actor in-dim {nets.actor.in_dim}")
    logits = mlp_forward(nets.actor, obs.reshape(1, -1))[0]
    if noise_scale == 0:
        return logits
    rng = np.random.default_rng(rng)
    return logits + rng.normal(0.0, noise_scale, size=logits.shape)


def to_action(logits: np.ndarray, squash: str = "softmax") -> np.ndarray:
    """Map policy logits to the action row the environment and critics see."""
    return softmax_with_temperature(logits) if squash == "softmax" else logits


def to_action_grad(logits: np.ndarray, upstream: np.ndarray, squash: str = "softmax") -> np.ndarray:
    """Pull ``dL/daction`` back to ``dL/dlogits`` (softmax Jacobian-vector product)."""
    if squash != "softmax":
        return upstream
    p = softmax_with_temperature(logits)
    return p * (upstream - np.sum(upstream * p, axis=1, keepdims=True))


def _finite(value: float, what: str) -> float:
    if not np.isfinite(value):
        raise NumericError(f"non-finite {what}: {value}")
    return value


def target_next_actions(all_nets: list[AgentNets], batch: Batch, squash: str = "softmax") -> np.ndarray:
    """``a'_j`` from each agent's target actor on its next observation, shape (B, N, 5)."""
    return np.stack([to_action(mlp_forward(a.target_actor, batch.next_obs[:, j]), squash)
                     for j, a in enumerate(all_nets)], axis=1)


def critic_targets(nets: AgentNets, all_nets: list[AgentNets], batch: Batch, config: TrainConfig,
                   next_actions: np.ndarray | None = None) -> np.ndarray:
    r = batch.rewards[:, nets.index][:, None]
    if not config.bootstrap_critic:
        return r
    if next_actions is None:
        next_actions = target_next_actions(all_nets, batch, config.action_squash)
    q_next = mlp_forward(nets.target_critic, critic_input(batch.next_obs, next_actions))
    return r + config.gamma * (1.0 - batch.done[:, None]) * q_next


def critic_loss_and_grads(critic: MlpParams, x: np.ndarray, y: np.ndarray):
    q = mlp_forward(critic, x)
    err = q - y
    loss = float(np.mean(err * err))
    grads = mlp_backward(critic, x, 2.0 * err / err.shape[0])
    return loss, grads


def critic_update(nets: AgentNets, all_nets: list[AgentNets], chunk, config: TrainConfig,
                  next_actions: np.ndarray | None = None) -> float:
    """One squared-TD-error step on agent ``nets.index``'s critic; returns the pre-step loss."""
    batch = stack(chunk)
    if len(batch) == 0:
        raise DimensionError("empty chunk")
    y = critic_targets(nets, all_nets, batch, config, next_actions)
    x = critic_input(batch.obs, batch.actions)
    loss, grads = critic_loss_and_grads(nets.critic, x, y)
    _finite(loss, "critic loss")
    optimizer_step(nets.critic, clip_by_global_norm(grads, config.grad_clip), config.lr_critic)
    return loss


def actor_loss_and_grads(actor: MlpParams, critic: MlpParams, index: int, obs: np.ndarray,
                         actions: np.ndarray, squash: str = "softmax", logit_reg: float = 0.0):
    """``-mean Q_i`` with agent ``index``'s action replaced by its actor's output.

    ``obs`` is (B, N, obs_dim), ``actions`` the stored joint action (B, N, 5).
    ``logit_reg`` adds ``logit_reg * mean(logits^2)`` to keep the head from saturating.
    """
    b, n, _ = obs.shape
    logits = mlp_forward(actor, obs[:, index])
    joint = actions.copy()
    joint[:, index] = to_action(logits, squash)
    x = critic_input(obs, joint)
    q = mlp_forward(critic, x)
    loss = -float(np.mean(q))
    cg = mlp_backward(critic, x, np.full((b, 1), -1.0 / b), input_grad=True)
    start = n * obs.shape[2] + index * ACTION_DIM
    d_own = to_action_grad(logits, cg.input[:, start:start + ACTION_DIM], squash)
    if logit_reg:
        loss += logit_reg * float(np.mean(logits * logits))
        d_own = d_own + logit_reg * 2.0 * logits / logits.size
    return loss, mlp_backward(actor, obs[:, index], d_own)


def actor_update(nets: AgentNets, all_nets: list[AgentNets], chunk, config: TrainConfig) -> float:
    """Policy step ascending agent ``nets.index``'s critic; returns the pre-step loss."""
    batch = stack(chunk)
    if len(batch) == 0:
        raise DimensionError("empty chunk")
    loss, grads = actor_loss_and_grads(nets.actor, nets.critic, nets.index, batch.obs, batch.actions,
                                       config.action_squash, config.actor_logit_reg)
    _finite(loss, "actor loss")
    optimizer_step(nets.actor, clip_by_global_norm(grads, config.grad_clip), config.lr_actor)
    return loss


def soft_update(nets: AgentNets, tau: float) -> None:
    """``target <- tau * online + (1 - tau) * target`` for actor and critic."""
    if not 0 < tau <= 1:
        raise ConfigError("tau must lie in (0, 1]")
    for online, target in ((nets.actor, nets.target_actor), (nets.critic, nets.target_critic)):
        for p, t in zip(online.tensors(), target.tensors()):
            if tau == 1.0:
                t[...] = p
            else:
                # difference form: exactly a no-op when online == target
                t += tau * (p - t)


def self_train_slot(all_nets: list[AgentNets], chunk, config: TrainConfig) -> tuple[list[float], list[float]]:
    """Critic then actor step for every agent on one chunk."""
    batch = stack(chunk)
    next_actions = (target_next_actions(all_nets, batch, config.action_squash)
                    if config.bootstrap_critic else None)
    c_losses, a_losses = [], []
    for nets in all_nets:
        c_losses.append(critic_update(nets, all_nets, batch, config, next_actions))
        a_losses.append(actor_update(nets, all_nets, batch, config))
    return c_losses, a_losses


# --------------------------------------------------------------------------
# shared training-loop pieces
# --------------------------------------------------------------------------

@dataclass
class RunStreams:
    """Independent random streams of one training run."""

    init: np.random.Generator
    env: np.random.Generator
    noise: np.random.Generator
    sample: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "RunStreams":
        return cls(*(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)))


def collect_episode(all_nets: list[AgentNets], env_config: WorldConfig, noise_scale: float,
                    streams: RunStreams, squash: str = "softmax") -> env_mpe.Rollout:
    policies = [
        (lambda o, nets=nets: to_action(act(nets, o, noise_scale, streams.noise), squash))
        for nets in all_nets
    ]
    return env_mpe.episode_rollout(policies, env_config, streams.env)


@dataclass
class MetricsRecord:
    seed: int
    episode: int
    avg_step_reward: float
    episode_reward: float
    phase: str
    self_updates: int
    share_updates: int
    noise_scale: float
    wall_seconds: float = 0.0

    FIELDS = ("seed", "episode", "avg_step_reward", "episode_reward", "phase",
              "self_updates", "share_updates", "noise_scale")


@dataclass
class TrainResult:
    records: list[MetricsRecord]
    agents: list[AgentNets]
    extra: dict = field(default_factory=dict)


EpisodeHook = Callable[[int, list[AgentNets]], None]


def save_agents(path, agents: list[AgentNets], meta: dict | None = None):
    nets = {}
    for a in agents:
        for name, p in a.named().items():
            nets[f"agent{a.index}/{name}"] = p
    return save_checkpoint(path, nets, meta)


def load_agents(path) -> list[AgentNets]:
    from .nn_core import load_checkpoint

    nets, _ = load_checkpoint(path)
    n = len({k.split("/")[0] for k in nets})
    return [AgentNets(i, nets[f"agent{i}/actor"], nets[f"agent{i}/critic"],
                      nets[f"agent{i}/target_actor"], nets[f"agent{i}/target_critic"]) for i in range(n)]


def train(env_config: WorldConfig, config: TrainConfig, seed: int, episodes: int,
          on_episode: EpisodeHook | None = None, checkpoint_dir=None) -> TrainResult:
    """Plain MADDPG: roll out, store, and every ``update_every`` episodes run
    one self-training slot per ordered chunk of a fresh sample."""
    streams = RunStreams.from_seed(seed)
    agents = make_agents(env_config, config, streams.init)
    buffer = ReplayBuffer(config.buffer_capacity)
    records = []
    n_updates = 0
    t0 = time.perf_counter()
    for episode in range(1, episodes + 1):
        noise = config.noise_scale(episode, episodes)
        roll = collect_episode(agents, env_config, noise, streams, config.action_squash)
        for tr in roll.transitions:
            buffer.push(tr)
        phase = "none"
        if episode % config.update_every == 0 and len(buffer) >= config.batch_size:
            batch = buffer.sample(config.batch_size, streams.sample)
            for chunk in ordered_chunks(batch, config.chunk_size):
                self_train_slot(agents, chunk, config)
                for a in agents:
                    soft_update(a, config.tau)
                n_updates += 1
            phase = "self"
        records.append(MetricsRecord(seed, episode, roll.avg_step_reward, roll.episode_reward, phase,
                                     n_updates, 0, noise, time.perf_counter() - t0))
        if on_episode is not None:
            on_episode(episode, agents)
        if checkpoint_dir is not None and config.checkpoint_every and episode % config.checkpoint_every == 0:
            save_agents(f"{checkpoint_dir}/ckpt_ep{episode:06d}.npz", agents, {"episode": episode, "seed": seed})
    return TrainResult(records, agents)
