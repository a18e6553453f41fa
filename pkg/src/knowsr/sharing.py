"""Knowledge sharing between homogeneous agents.

Training alternates between ordinary MADDPG update slots and *share* slots in
which every actor regresses its logits onto the logits its peers produce for
the same observations.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass

import numpy as np

from .env_mpe import ACTION_DIM, WorldConfig
from .errors import ConfigError, DimensionError
from .maddpg import (AgentNets, MetricsRecord, RunStreams, TrainConfig, TrainResult, EpisodeHook,
                     collect_episode, make_agents, save_agents, self_train_slot, soft_update)
from .nn_core import (clip_by_global_norm, kd_loss, kd_loss_grad, mlp_backward, mlp_forward,
                      mse_share_grad, mse_share_loss, optimizer_step)
from .replay_buffer import ReplayBuffer, ordered_chunks, stack


class Phase(str, enum.Enum):
    SELF_TRAIN = "self"
    SHARE = "share"


@dataclass(frozen=True)
class ShareSchedule:
    """Repeating cycle of ``self_steps`` self-training slots then ``share_steps``
    share slots, active only for episodes after ``share_start_episode``."""

    self_steps: int = 7
    share_steps: int = 3
    share_start_episode: int = 200
    share_loss: str = "mse"
    share_temperature: float = 1.0
    lr_share: float | None = None  # None -> lr_actor

    def __post_init__(self):
        if self.self_steps < 1:
            raise ConfigError("self_steps must be >= 1")
        if self.share_steps < 0:
            raise ConfigError("share_steps must be >= 0")
        if self.share_loss not in ("mse", "kd"):
            raise ConfigError(f"share_loss must be 'mse' or 'kd', got {self.share_loss!r}")
        if not self.share_temperature > 0:
            raise ConfigError("share_temperature must be positive")

    @property
    def cycle(self) -> int:
        """Update frequency: slots per self/share cycle."""
        return self.self_steps + self.share_steps

    @property
    def label(self) -> str:
        return "MADDPG" if self.share_steps == 0 else f"{self.self_steps}-{self.share_steps}KnowSR"


def schedule_phase(sched: ShareSchedule, update_index: int, episode: int) -> Phase:
    """Phase of update slot ``update_index`` taken during (1-based) ``episode``."""
    if sched.share_steps == 0 or episode <= sched.share_start_episode:
        return Phase.SELF_TRAIN
    if update_index % sched.cycle < sched.self_steps:
        return Phase.SELF_TRAIN
    return Phase.SHARE


@dataclass
class AdviceBatch:
    obs: np.ndarray  # (B, obs_dim)
    peer_logits: dict[int, np.ndarray]  # peer index -> (B, 5)


def collect_advice(agent_index: int, obs_batch, all_nets: list[AgentNets]) -> AdviceBatch:
    """Every peer's online-actor logits on ``agent_index``'s observations (read-only)."""
    if len(all_nets) < 2:
        raise ConfigError("advice needs at least two agents")
    obs = np.asarray(obs_batch, dtype=np.float64)
    if obs.ndim == 1:
        obs = obs[None, :]
    peers = {}
    for k, nets in enumerate(all_nets):
        if k == agent_index:
            continue
        if obs.shape[1] != nets.actor.in_dim:
            raise DimensionError(f"observation dim {obs.shape[1]} != peer {k} in-dim {nets.actor.in_dim}")
        peers[k] = mlp_forward(nets.actor, obs)
    return AdviceBatch(obs, peers)


def share_loss_and_grads(nets: AgentNets, advice: AdviceBatch, loss: str = "mse", temperature: float = 1.0):
    """Peer-averaged sharing loss and its actor gradients."""
    if not advice.peer_logits:
        raise ConfigError("share update needs at least one peer")
    own = mlp_forward(nets.actor, advice.obs)
    n_peers = len(advice.peer_logits)
    total = 0.0
    upstream = np.zeros_like(own)
    for peer in advice.peer_logits.values():
        if peer.shape != own.shape or peer.shape[1] != ACTION_DIM:
            raise DimensionError(f"advice shape {peer.shape} != own logits {own.shape}")
        if loss == "mse":
            total += mse_share_loss(own, peer)
            upstream += mse_share_grad(own, peer)
        else:
            total += kd_loss(own, peer, temperature)
            upstream += kd_loss_grad(own, peer, temperature)
    return total / n_peers, mlp_backward(nets.actor, advice.obs, upstream / n_peers)


def share_update(agent_index: int, advice: AdviceBatch, nets: AgentNets, lr_share: float,
                 loss: str = "mse", temperature: float = 1.0, grad_clip: float | None = 0.5) -> float:
    """One actor step pulling agent ``agent_index`` toward its peers' advice.

    The critic is untouched. Returns the loss before the step.
    """
    if nets.index != agent_index:
        raise ConfigError(f"nets belong to agent {nets.index}, not {agent_index}")
    value, grads = share_loss_and_grads(nets, advice, loss, temperature)
    optimizer_step(nets.actor, clip_by_global_norm(grads, grad_clip), lr_share)
    return value


def share_slot(all_nets: list[AgentNets], chunk, sched: ShareSchedule, config: TrainConfig) -> list[float]:
    """Synchronous sharing: all advice is read before any actor moves."""
    batch = stack(chunk)
    lr = sched.lr_share if sched.lr_share is not None else config.lr_actor
    advice = [collect_advice(i, batch.obs[:, i], all_nets) for i in range(len(all_nets))]
    return [share_update(i, advice[i], all_nets[i], lr, sched.share_loss, sched.share_temperature,
                         config.grad_clip) for i in range(len(all_nets))]


def run_training(env_config: WorldConfig, config: TrainConfig, sched: ShareSchedule, seed: int,
                 episodes: int, on_episode: EpisodeHook | None = None, checkpoint_dir=None) -> TrainResult:
    """MADDPG with interleaved knowledge sharing; one record per episode.

    The slot counter (``M``) advances on every update slot and wraps at the
    schedule's cycle length, so the realised self:share split is exact.
    """
    if env_config.n_agents < 2:
        raise ConfigError("knowledge sharing needs at least two agents")
    streams = RunStreams.from_seed(seed)
    agents = make_agents(env_config, config, streams.init)
    buffer = ReplayBuffer(config.buffer_capacity)
    records = []
    counter = 0
    n_self = n_share = 0
    t0 = time.perf_counter()
    for episode in range(1, episodes + 1):
        noise = config.noise_scale(episode, episodes)
        roll = collect_episode(agents, env_config, noise, streams, config.action_squash)
        for tr in roll.transitions:
            buffer.push(tr)
        phases = set()
        if episode % config.update_every == 0 and len(buffer) >= config.batch_size:
            batch = buffer.sample(config.batch_size, streams.sample)
            for chunk in ordered_chunks(batch, config.chunk_size):
                phase = schedule_phase(sched, counter, episode)
                if phase is Phase.SELF_TRAIN:
                    self_train_slot(agents, chunk, config)
                    n_self += 1
                else:
                    share_slot(agents, chunk, sched, config)
                    n_share += 1
                for a in agents:
                    soft_update(a, config.tau)
                phases.add(phase.value)
                counter = (counter + 1) % sched.cycle
        label = "none" if not phases else (phases.pop() if len(phases) == 1 else "mixed")
        records.append(MetricsRecord(seed, episode, roll.avg_step_reward, roll.episode_reward, label,
                                     n_self, n_share, noise, time.perf_counter() - t0))
        if on_episode is not None:
            on_episode(episode, agents)
        if checkpoint_dir is not None and config.checkpoint_every and episode % config.checkpoint_every == 0:
            save_agents(f"{checkpoint_dir}/ckpt_ep{episode:06d}.npz", agents, {"episode": episode, "seed": seed})
    return TrainResult(records, agents)
