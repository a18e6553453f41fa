"""Dense networks from scratch: forward/backward, Adam, distillation losses.

Tensors are plain 2-D ``float64`` numpy arrays (rows = batch). Weights are
stored ``(in_dim, out_dim)`` so a layer is ``h @ W + b``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DimensionError, DomainError, NumericError, ParameterError

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

_ACTIVATIONS = ("relu", "linear")


@dataclass
class MlpParams:
    """Weights, biases and Adam state of one fully connected network."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise DimensionError("weights, biases and activations must have equal length")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (1, w.shape[1]):
                raise DimensionError(f"layer {k}: bias shape {b.shape} != (1, {w.shape[1]})")
            if k and self.weights[k - 1].shape[1] != w.shape[0]:
                raise DimensionError(f"layer {k} in-dim {w.shape[0]} does not chain")
        for a in self.activations:
            if a not in _ACTIVATIONS:
                raise ParameterError(f"unknown activation {a!r}")
        if not self.m:
            self.m = [np.zeros_like(p) for p in self.tensors()]
            self.v = [np.zeros_like(p) for p in self.tensors()]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def tensors(self) -> list[np.ndarray]:
        """Parameters in canonical order W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
            [a.copy() for a in self.m],
            [a.copy() for a in self.v],
            self.step,
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.tensors()])

    def n_params(self) -> int:
        return sum(p.size for p in self.tensors())


@dataclass
class Gradients:
    """dL/dparam for every weight and bias; ``input`` holds dL/dx when requested."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input: np.ndarray | None = None

    def tensors(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def global_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(g * g) for g in self.tensors())))


def init_mlp(sizes, rng, hidden_activation="relu", output_activation="linear") -> MlpParams:
    """Layers ``sizes[0] -> ... -> sizes[-1]``, uniform(+-1/sqrt(fan_in)) init."""
    if len(sizes) < 2:
        raise DimensionError("need at least an input and an output size")
    rng = np.random.default_rng(rng)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=(1, fan_out)))
    acts = [hidden_activation] * (len(sizes) - 2) + [output_activation]
    return MlpParams(weights, biases, acts)


def _as_batch(x, in_dim) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != in_dim:
        raise DimensionError(f"input shape {x.shape} incompatible with in-dim {in_dim}")
    return x


def _is_standard(params: MlpParams) -> bool:
    acts = params.activations
    return acts[-1] == "linear" and all(a == "relu" for a in acts[:-1])


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Final-layer pre-activation output (the policy logits for an actor)."""
    x = _as_batch(x, params.in_dim)
    if _is_standard(params):
        return kernels.relu_mlp_forward(
            np.ascontiguousarray(x),
            tuple(np.ascontiguousarray(w) for w in params.weights),
            tuple(np.ascontiguousarray(b) for b in params.biases),
        )
    out, _ = _forward_cached(params, x)
    return out


def _forward_cached(params: MlpParams, x: np.ndarray):
    """Forward pass keeping each layer's input and pre-activation."""
    inputs, pre = [], []
    h = x
    for w, b, act in zip(params.weights, params.biases, params.activations):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if act == "relu" else z
    return h, (inputs, pre)


def mlp_backward(params: MlpParams, x, upstream_grad, input_grad: bool = False) -> Gradients:
    """Reverse-mode gradients of ``sum(upstream_grad * mlp_forward(params, x))``."""
    x = _as_batch(x, params.in_dim)
    upstream_grad = np.asarray(upstream_grad, dtype=np.float64)
    if upstream_grad.shape != (x.shape[0], params.out_dim):
        raise DimensionError(
            f"upstream grad {upstream_grad.shape} != output {(x.shape[0], params.out_dim)}"
        )
    _, (inputs, pre) = _forward_cached(params, x)
    n = len(params.weights)
    gw: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    g = upstream_grad
    for k in range(n - 1, -1, -1):
        if params.activations[k] == "relu":
            g = g * (pre[k] > 0.0)
        gw[k] = inputs[k].T @ g
        gb[k] = np.sum(g, axis=0, keepdims=True)
        if k > 0 or input_grad:
            g = g @ params.weights[k].T
    return Gradients(gw, gb, g if input_grad else None)


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------

def softmax_with_temperature(logits, T: float = 1.0) -> np.ndarray:
    """Row-wise ``exp(a/T) / sum exp(a/T)`` with max subtraction."""
    if not T > 0:
        raise ParameterError(f"temperature must be positive, got {T}")
    z = np.asarray(logits, dtype=np.float64) / T
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax_with_temperature(logits, T: float = 1.0) -> np.ndarray:
    if not T > 0:
        raise ParameterError(f"temperature must be positive, got {T}")
    z = np.asarray(logits, dtype=np.float64) / T
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def kl_divergence(p, q) -> float:
    """KL(p || q) for two probability rows; terms with p = 0 contribute 0."""
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    if p.shape != q.shape:
        raise DimensionError(f"shape mismatch {p.shape} vs {q.shape}")
    if abs(p.sum() - 1.0) > 1e-9 or abs(q.sum() - 1.0) > 1e-9:
        raise DomainError("rows must sum to 1")
    support = p > 0
    if np.any(q[support] <= 0):
        raise DomainError("q is zero where p is positive")
    ps, qs = p[support], q[support]
    return float(max(np.sum(ps * np.log(ps / qs)), 0.0))


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if b.ndim == 1:
        b = b[None, :]
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def kd_loss(student_logits, teacher_logits, T: float = 1.0) -> float:
    """``T^2 * KL(softmax_T(student) || softmax_T(teacher))``, batch mean."""
    s, t = _check_pair(student_logits, teacher_logits)
    ls = log_softmax_with_temperature(s, T)
    lt = log_softmax_with_temperature(t, T)
    kl = np.sum(np.exp(ls) * (ls - lt), axis=1)
    return float(T * T * np.mean(np.maximum(kl, 0.0)))


def kd_loss_grad(student_logits, teacher_logits, T: float = 1.0) -> np.ndarray:
    """Gradient of :func:`kd_loss` with respect to the student logits."""
    s, t = _check_pair(student_logits, teacher_logits)
    ls = log_softmax_with_temperature(s, T)
    lt = log_softmax_with_temperature(t, T)
    p = np.exp(ls)
    diff = ls - lt
    kl = np.sum(p * diff, axis=1, keepdims=True)
    return T * p * (diff - kl) / s.shape[0]


def mse_share_loss(own_logits, advice_logits) -> float:
    """Mean squared logit gap over all rows and entries."""
    a, b = _check_pair(own_logits, advice_logits)
    d = a - b
    return float(np.mean(d * d))


def mse_share_grad(own_logits, advice_logits) -> np.ndarray:
    a, b = _check_pair(own_logits, advice_logits)
    return 2.0 * (a - b) / a.size


# --------------------------------------------------------------------------
# optimisation
# --------------------------------------------------------------------------

def clip_by_global_norm(grads: Gradients, max_norm: float | None) -> Gradients:
    """Scale all gradients down together when their joint norm exceeds ``max_norm``."""
    if max_norm is None:
        return grads
    norm = grads.global_norm()
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return Gradients([g * scale for g in grads.weights], [g * scale for g in grads.biases], grads.input)


def optimizer_step(params: MlpParams, grads: Gradients, lr: float,
                   betas=ADAM_BETAS, eps: float = ADAM_EPS) -> MlpParams:
    """One in-place Adam update. Raises NumericError before touching anything
    if a gradient entry is not finite."""
    if lr < 0:
        raise ParameterError(f"learning rate must be non-negative, got {lr}")
    gs = grads.tensors()
    ps = params.tensors()
    if len(gs) != len(ps) or any(g.shape != p.shape for g, p in zip(gs, ps)):
        raise DimensionError("gradient shapes do not match parameters")
    if not all(np.all(np.isfinite(g)) for g in gs):
        raise NumericError("non-finite gradient; optimizer step aborted")
    b1, b2 = betas
    params.step += 1
    c1 = 1.0 - b1 ** params.step
    c2 = 1.0 - b2 ** params.step
    for p, g, m, v in zip(ps, gs, params.m, params.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------

def save_checkpoint(path, nets: dict[str, MlpParams], meta: dict | None = None) -> Path:
    """Write named networks (values, Adam moments, step counters) to one ``.npz``.

    The archive embeds a JSON header listing every network's layer shapes and
    activations, so it can be read back without any outside knowledge.
    """
    path = Path(path)
    arrays = {}
    header = {"format": "knowsr-mlp/1", "meta": meta or {}, "nets": {}}
    for name, p in nets.items():
        header["nets"][name] = {
            "shapes": [list(w.shape) for w in p.weights],
            "activations": list(p.activations),
            "step": int(p.step),
        }
        for k, (w, b) in enumerate(zip(p.weights, p.biases)):
            arrays[f"{name}/W{k}"] = w
            arrays[f"{name}/b{k}"] = b
        for k, (m, v) in enumerate(zip(p.m, p.v)):
            arrays[f"{name}/m{k}"] = m
            arrays[f"{name}/v{k}"] = v
    arrays["__header__"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> tuple[dict[str, MlpParams], dict]:
    with np.load(Path(path)) as data:
        header = json.loads(bytes(data["__header__"]).decode())
        nets = {}
        for name, info in header["nets"].items():
            n = len(info["shapes"])
            weights = [data[f"{name}/W{k}"].copy() for k in range(n)]
            biases = [data[f"{name}/b{k}"].copy() for k in range(n)]
            m = [data[f"{name}/m{k}"].copy() for k in range(2 * n)]
            v = [data[f"{name}/v{k}"].copy() for k in range(2 * n)]
            nets[name] = MlpParams(weights, biases, info["activations"], m, v, info["step"])
    return nets, header["meta"]
