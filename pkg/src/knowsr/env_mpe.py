"""Cooperative navigation (``simple_spread``) on a 2-D plane.

N point-mass agents must cover N landmarks. All agents share the negative sum
over landmarks of the distance to the nearest agent; agents that overlap with
another agent pay an extra collision penalty.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionError, StateError

ACTION_DIM = 5


@dataclass(frozen=True)
class WorldConfig:
    n_agents: int = 3
    n_landmarks: int = 3
    agent_radius: float = 0.15
    landmark_radius: float = 0.05
    dt: float = 0.1
    damping: float = 0.25
    max_steps: int = 25
    world_extent: float = 1.0
    collision_penalty: float = 1.0
    force_scale: float = 5.0
    # fixed landmark coordinates reused by every reset; None draws them afresh
    landmark_layout: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.n_agents < 2:
            raise ConfigError("n_agents must be >= 2")
        if self.n_landmarks < 1:
            raise ConfigError("n_landmarks must be >= 1")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not 0 <= self.damping < 1:
            raise ConfigError("damping must lie in [0, 1)")
        if self.landmark_layout is not None:
            layout = tuple(tuple(float(c) for c in p) for p in self.landmark_layout)
            if len(layout) != self.n_landmarks or any(len(p) != 2 for p in layout):
                raise ConfigError(f"landmark_layout needs {self.n_landmarks} (x, y) pairs")
            object.__setattr__(self, "landmark_layout", layout)

    @property
    def obs_dim(self) -> int:
        return 4 + 2 * self.n_landmarks + 2 * (self.n_agents - 1)


@dataclass
class WorldState:
    agent_pos: np.ndarray  # (n_agents, 2)
    agent_vel: np.ndarray  # (n_agents, 2)
    landmark_pos: np.ndarray  # (n_landmarks, 2)
    t: int = 0

    def copy(self) -> "WorldState":
        return WorldState(self.agent_pos.copy(), self.agent_vel.copy(), self.landmark_pos.copy(), self.t)

    def translated(self, offset) -> "WorldState":
        off = np.asarray(offset, dtype=np.float64)
        return WorldState(self.agent_pos + off, self.agent_vel.copy(), self.landmark_pos + off, self.t)


@dataclass
class Transition:
    """One joint step: per-agent rows stacked along axis 0."""

    obs: np.ndarray  # (n_agents, obs_dim)
    actions: np.ndarray  # (n_agents, 5)
    rewards: np.ndarray  # (n_agents,)
    next_obs: np.ndarray  # (n_agents, obs_dim)
    done: bool


def reset(config: WorldConfig, rng) -> WorldState:
    """Fresh episode: uniform spawns in the box, zero velocities.

    ``rng`` may be an int seed or a ``numpy.random.Generator`` (advanced in place).
    """
    rng = np.random.default_rng(rng)
    e = config.world_extent
    agent_pos = rng.uniform(-e, e, size=(config.n_agents, 2))
    landmark_pos = rng.uniform(-e, e, size=(config.n_landmarks, 2))
    if config.landmark_layout is not None:
        landmark_pos = np.array(config.landmark_layout, dtype=np.float64)
    return WorldState(agent_pos, np.zeros((config.n_agents, 2)), landmark_pos, 0)


def observe_all(state: WorldState) -> np.ndarray:
    """Observation rows for every agent, shape ``(n_agents, obs_dim)``."""
    return kernels.observations(state.agent_pos, state.agent_vel, state.landmark_pos)


def observe(state: WorldState, agent_index: int) -> np.ndarray:
    n = state.agent_pos.shape[0]
    if not 0 <= agent_index < n:
        raise IndexError(f"agent index {agent_index} out of range for {n} agents")
    return observe_all(state)[agent_index]


def rewards(state: WorldState, config: WorldConfig) -> tuple[np.ndarray, float]:
    """Per-agent rewards and the shared distance term for the current positions."""
    return kernels.spread_reward(
        state.agent_pos, state.landmark_pos, config.agent_radius, config.collision_penalty
    )


def step(state: WorldState, actions, config: WorldConfig):
    """Advance one tick. Returns ``(next_state, per_agent_rewards, done)``."""
    if state.t >= config.max_steps:
        raise StateError("episode already finished; call reset()")
    actions = np.ascontiguousarray(actions, dtype=np.float64)
    if actions.shape != (config.n_agents, ACTION_DIM):
        raise DimensionError(f"actions shape {actions.shape} != {(config.n_agents, ACTION_DIM)}")
    pos, vel = kernels.integrate(
        state.agent_pos, state.agent_vel, actions, config.force_scale, config.dt, config.damping
    )
    nxt = WorldState(pos, vel, state.landmark_pos, state.t + 1)
    r, _ = rewards(nxt, config)
    return nxt, r, nxt.t == config.max_steps


Policy = Callable[[np.ndarray], np.ndarray]


@dataclass
class Rollout:
    transitions: list[Transition]
    avg_step_reward: float
    episode_reward: float
    states: list[WorldState] = field(default_factory=list)


def episode_rollout(policies: Sequence[Policy], config: WorldConfig, rng,
                    keep_states: bool = False) -> Rollout:
    """Play one full episode from ``reset(config, rng)``.

    The team reward of a step is the mean of the per-agent rewards, which equals
    the shared distance term whenever nobody collides.
    """
    if len(policies) != config.n_agents:
        raise DimensionError(f"{len(policies)} policies for {config.n_agents} agents")
    state = reset(config, rng)
    obs = observe_all(state)
    transitions = []
    states = [state] if keep_states else []
    total = 0.0
    done = False
    while not done:
        actions = np.stack([np.asarray(pi(obs[i]), dtype=np.float64).reshape(ACTION_DIM)
                            for i, pi in enumerate(policies)])
        state, r, done = step(state, actions, config)
        next_obs = observe_all(state)
        transitions.append(Transition(obs, actions, r, next_obs, done))
        if keep_states:
            states.append(state)
        total += float(np.mean(r))
        obs = next_obs
    return Rollout(transitions, total / config.max_steps, total, states)


def dump_trajectory(path, rollout: Rollout) -> None:
    """One JSON object per step: positions after the step, actions, rewards."""
    if not rollout.states:
        raise StateError("rollout was recorded without states (keep_states=False)")
    with open(path, "w") as fh:
        for t, (tr, st) in enumerate(zip(rollout.transitions, rollout.states[1:])):
            rec = {
                "t": t,
                "agent_pos": st.agent_pos.tolist(),
                "landmark_pos": st.landmark_pos.tolist(),
                "actions": tr.actions.tolist(),
                "rewards": tr.rewards.tolist(),
            }
            fh.write(json.dumps(rec) + "\n")


__all__ = [
    "ACTION_DIM", "WorldConfig", "WorldState", "Transition", "Rollout", "reset", "observe",
    "observe_all", "rewards", "step", "episode_rollout", "dump_trajectory",
]
