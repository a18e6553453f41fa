"""Hot inner loops: particle physics, spread rewards, observations, MLP inference.

Every kernel exists twice: a loop version compiled with ``numba.njit`` and a
vectorised pure-numpy version. The public names at the bottom of the module
point at one or the other. Set ``KNOWSR_DISABLE_NUMBA=1`` (or run without
numba installed) to force the numpy path; the choice is made once at import.
"""

import math
import os

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

_DISABLED = os.environ.get("KNOWSR_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")
USE_NUMBA = _HAVE_NUMBA and not _DISABLED


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------

def integrate_np(pos, vel, actions, force_scale, dt, damping):
    force = np.empty_like(pos)
    force[:, 0] = force_scale * (actions[:, 1] - actions[:, 2])
    force[:, 1] = force_scale * (actions[:, 3] - actions[:, 4])
    new_vel = vel * (1.0 - damping) + force * dt
    new_pos = pos + new_vel * dt
    return new_pos, new_vel


def spread_reward_np(agent_pos, landmark_pos, agent_radius, collision_penalty):
    # dist[l, a]
    diff = landmark_pos[:, None, :] - agent_pos[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    shared = -np.sum(np.min(dist, axis=1))
    d = agent_pos[:, None, :] - agent_pos[None, :, :]
    pair = np.sqrt(np.sum(d * d, axis=2))
    hit = pair < 2.0 * agent_radius
    np.fill_diagonal(hit, False)
    rewards = shared - collision_penalty * np.sum(hit, axis=1)
    return rewards.astype(np.float64), float(shared)


def observations_np(agent_pos, agent_vel, landmark_pos):
    n = agent_pos.shape[0]
    rel_lm = landmark_pos[None, :, :] - agent_pos[:, None, :]
    rel_ag = agent_pos[None, :, :] - agent_pos[:, None, :]
    mask = ~np.eye(n, dtype=bool)
    others = rel_ag[mask].reshape(n, n - 1, 2)
    return np.concatenate(
        [agent_vel, agent_pos, rel_lm.reshape(n, -1), others.reshape(n, -1)], axis=1
    )


def relu_mlp_forward_np(x, weights, biases):
    h = x
    last = len(weights) - 1
    for k in range(len(weights)):
        h = h @ weights[k] + biases[k]
        if k < last:
            h = np.maximum(h, 0.0)
    return h


# --------------------------------------------------------------------------
# loop implementations (compiled when numba is active)
# --------------------------------------------------------------------------

def _integrate_loop(pos, vel, actions, force_scale, dt, damping):
    n = pos.shape[0]
    new_pos = np.empty_like(pos)
    new_vel = np.empty_like(vel)
    for i in range(n):
        fx = force_scale * (actions[i, 1] - actions[i, 2])
        fy = force_scale * (actions[i, 3] - actions[i, 4])
        vx = vel[i, 0] * (1.0 - damping) + fx * dt
        vy = vel[i, 1] * (1.0 - damping) + fy * dt
        new_vel[i, 0] = vx
        new_vel[i, 1] = vy
        new_pos[i, 0] = pos[i, 0] + vx * dt
        new_pos[i, 1] = pos[i, 1] + vy * dt
    return new_pos, new_vel


def _spread_reward_loop(agent_pos, landmark_pos, agent_radius, collision_penalty):
    n = agent_pos.shape[0]
    m = landmark_pos.shape[0]
    shared = 0.0
    for l in range(m):
        best = np.inf
        for a in range(n):
            dx = landmark_pos[l, 0] - agent_pos[a, 0]
            dy = landmark_pos[l, 1] - agent_pos[a, 1]
            d = math.sqrt(dx * dx + dy * dy)
            if d < best:
                best = d
        shared -= best
    rewards = np.full(n, shared)
    thresh = 2.0 * agent_radius
    for a in range(n):
        for b in range(a + 1, n):
            dx = agent_pos[a, 0] - agent_pos[b, 0]
            dy = agent_pos[a, 1] - agent_pos[b, 1]
            if math.sqrt(dx * dx + dy * dy) < thresh:
                rewards[a] -= collision_penalty
                rewards[b] -= collision_penalty
    return rewards, shared


def _observations_loop(agent_pos, agent_vel, landmark_pos):
    n = agent_pos.shape[0]
    m = landmark_pos.shape[0]
    out = np.empty((n, 4 + 2 * m + 2 * (n - 1)))
    for i in range(n):
        out[i, 0] = agent_vel[i, 0]
        out[i, 1] = agent_vel[i, 1]
        out[i, 2] = agent_pos[i, 0]
        out[i, 3] = agent_pos[i, 1]
        c = 4
        for l in range(m):
            out[i, c] = landmark_pos[l, 0] - agent_pos[i, 0]
            out[i, c + 1] = landmark_pos[l, 1] - agent_pos[i, 1]
            c += 2
        for j in range(n):
            if j == i:
                continue
            out[i, c] = agent_pos[j, 0] - agent_pos[i, 0]
            out[i, c + 1] = agent_pos[j, 1] - agent_pos[i, 1]
            c += 2
    return out


def _relu_mlp_forward_loop(x, weights, biases):
    h = x
    last = len(weights) - 1
    k = 0
    for w in weights:
        z = np.dot(h, w)
        b = biases[k]
        for r in range(z.shape[0]):
            for c in range(z.shape[1]):
                v = z[r, c] + b[0, c]
                if k < last and v < 0.0:
                    v = 0.0
                z[r, c] = v
        h = z
        k += 1
    return h


if _HAVE_NUMBA:
    integrate_nb = njit(cache=True)(_integrate_loop)
    spread_reward_nb = njit(cache=True)(_spread_reward_loop)
    observations_nb = njit(cache=True)(_observations_loop)
    relu_mlp_forward_nb = njit(cache=True)(_relu_mlp_forward_loop)
else:  # pragma: no cover
    integrate_nb = _integrate_loop
    spread_reward_nb = _spread_reward_loop
    observations_nb = _observations_loop
    relu_mlp_forward_nb = _relu_mlp_forward_loop


if USE_NUMBA:
    integrate = integrate_nb
    observations = observations_nb
    relu_mlp_forward = relu_mlp_forward_nb

    def spread_reward(agent_pos, landmark_pos, agent_radius, collision_penalty):
        rewards, shared = spread_reward_nb(agent_pos, landmark_pos, agent_radius, collision_penalty)
        return rewards, float(shared)

else:
    integrate = integrate_np
    spread_reward = spread_reward_np
    observations = observations_np
    relu_mlp_forward = relu_mlp_forward_np


def backend():
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"
