"""Minimal differentiable MLP stack: analytic backprop, Adam, Gaussian policy head.

Parameters are treated as immutable snapshots; every update returns new arrays.
Randomness is always injected through explicit noise arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_STD_LO = -5.0
LOG_STD_HI = 1.0
_HALF_LOG_2PIE = 0.5 * float(np.log(2.0 * np.pi * np.e))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def silu(x):
    return x * _sigmoid(x)


def silu_deriv(x):
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


_ACTIVATIONS = {"silu": (silu, silu_deriv), "identity": (lambda x: x, lambda x: np.ones_like(x))}


@dataclass
class MlpParams:
    """Stacked affine layers; hidden layers use `activation`, last layer is linear."""

    weights: list  # each (fan_in, fan_out)
    biases: list  # each (fan_out,)
    activation: str = "silu"

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("weights/biases layer count mismatch")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        for i in range(len(self.weights) - 1):
            if self.weights[i].shape[1] != self.weights[i + 1].shape[0]:
                raise ValueError(f"layer {i} output does not feed layer {i + 1} input")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (w.shape[1],):
                raise ValueError(f"layer {i} bias shape mismatch")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpParams":
        return MlpParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def with_flat(self, vec: np.ndarray) -> "MlpParams":
        """Rebuild a parameter snapshot from a flat vector (for gradient checks)."""
        weights, biases = [], []
        k = 0
        for w, b in zip(self.weights, self.biases):
            weights.append(vec[k : k + w.size].reshape(w.shape).copy())
            k += w.size
            biases.append(vec[k : k + b.size].reshape(b.shape).copy())
            k += b.size
        if k != vec.size:
            raise ValueError("flat vector length mismatch")
        return MlpParams(weights, biases, self.activation)


@dataclass
class GradientRecord:
    """Accumulated parameter gradients, shape-congruent with an MlpParams."""

    weights: list
    biases: list

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def add_(self, other: "GradientRecord") -> "GradientRecord":
        for i in range(len(self.weights)):
            self.weights[i] += other.weights[i]
            self.biases[i] += other.biases[i]
        return self

    def scale_(self, c: float) -> "GradientRecord":
        for i in range(len(self.weights)):
            self.weights[i] *= c
            self.biases[i] *= c
        return self

    def norm(self) -> float:
        sq = sum(float(np.sum(w * w)) for w in self.weights)
        sq += sum(float(np.sum(b * b)) for b in self.biases)
        return float(np.sqrt(sq))


def zero_grads(params: MlpParams) -> GradientRecord:
    return GradientRecord(
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
    )


def init_mlp(sizes, rng: np.random.Generator, activation: str = "silu") -> MlpParams:
    """Xavier-scaled random init for layer sizes [in, h1, ..., out]."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        scale = np.sqrt(2.0 / (fan_in + fan_out))
        weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, activation)


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Deterministic forward pass; accepts (in,) or (batch, in)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[-1] != params.in_dim:
        raise ValueError(f"input width {h.shape[-1]} != first layer {params.in_dim}")
    act, _ = _ACTIVATIONS[params.activation]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = act(h)
    return h[0] if single else h


def backward(params: MlpParams, x: np.ndarray, upstream: np.ndarray):
    """Exact reverse-mode derivatives of sum(output * upstream).

    Args:
        x: input, (in,) or (batch, in).
        upstream: cotangent on the output, matching forward's output shape.

    Returns:
        (GradientRecord, d_input): parameter gradients summed over the batch
        and the gradient with respect to the input (same shape as x).
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    g = upstream[None, :] if single else upstream
    if h.shape[-1] != params.in_dim:
        raise ValueError(f"input width {h.shape[-1]} != first layer {params.in_dim}")
    if g.shape[-1] != params.out_dim:
        raise ValueError(f"upstream width {g.shape[-1]} != last layer {params.out_dim}")

    act, dact = _ACTIVATIONS[params.activation]
    last = len(params.weights) - 1
    pre = []  # pre-activation per layer
    post = [h]  # layer inputs
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = post[-1] @ w + b
        pre.append(z)
        post.append(act(z) if i < last else z)

    grads = zero_grads(params)
    dz = g
    for i in range(last, -1, -1):
        grads.weights[i][...] = post[i].T @ dz
        grads.biases[i][...] = dz.sum(axis=0)
        dh = dz @ params.weights[i].T
        dz = dh * dact(pre[i - 1]) if i > 0 else dh
    d_input = dz
    return grads, (d_input[0] if single else d_input)


@dataclass
class OptimizerState:
    """Adam moment accumulators for one MlpParams."""

    m_weights: list
    m_biases: list
    v_weights: list
    v_biases: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_optimizer(params: MlpParams, lr: float) -> OptimizerState:
    return OptimizerState(
        m_weights=[np.zeros_like(w) for w in params.weights],
        m_biases=[np.zeros_like(b) for b in params.biases],
        v_weights=[np.zeros_like(w) for w in params.weights],
        v_biases=[np.zeros_like(b) for b in params.biases],
        lr=lr,
    )


def optimizer_step(state: OptimizerState, params: MlpParams, grads: GradientRecord):
    """One Adam step. Returns (new_params, state); rejects non-finite gradients."""
    for i, (gw, gb) in enumerate(zip(grads.weights, grads.biases)):
        if not np.all(np.isfinite(gw)):
            raise FloatingPointError(f"non-finite gradient at layer {i} weights")
        if not np.all(np.isfinite(gb)):
            raise FloatingPointError(f"non-finite gradient at layer {i} biases")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    new_w, new_b = [], []
    for i in range(len(params.weights)):
        state.m_weights[i] = b1 * state.m_weights[i] + (1 - b1) * grads.weights[i]
        state.v_weights[i] = b2 * state.v_weights[i] + (1 - b2) * grads.weights[i] ** 2
        state.m_biases[i] = b1 * state.m_biases[i] + (1 - b1) * grads.biases[i]
        state.v_biases[i] = b2 * state.v_biases[i] + (1 - b2) * grads.biases[i] ** 2
        mw = state.m_weights[i] / corr1
        vw = state.v_weights[i] / corr2
        mb = state.m_biases[i] / corr1
        vb = state.v_biases[i] / corr2
        new_w.append(params.weights[i] - state.lr * mw / (np.sqrt(vw) + state.eps))
        new_b.append(params.biases[i] - state.lr * mb / (np.sqrt(vb) + state.eps))
    return MlpParams(new_w, new_b, params.activation), state


def clip_grad_norm(grads: GradientRecord, max_norm: float) -> float:
    """Scale grads in place so their global norm is at most max_norm."""
    norm = grads.norm()
    if max_norm > 0 and norm > max_norm:
        grads.scale_(max_norm / norm)
    return norm


# -- Gaussian policy head ----------------------------------------------------


def squash_log_std(raw):
    """Smoothly map an unbounded head output into [LOG_STD_LO, LOG_STD_HI]."""
    return LOG_STD_LO + (LOG_STD_HI - LOG_STD_LO) * _sigmoid(raw)


def squash_log_std_deriv(raw):
    s = _sigmoid(raw)
    return (LOG_STD_HI - LOG_STD_LO) * s * (1.0 - s)


def gaussian_head_sample(mean, log_std, noise):
    """tanh(mean + exp(log_std) * noise); components land strictly in (-1, 1)."""
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    return np.tanh(mean + np.exp(log_std) * noise)


def gaussian_entropy(log_std) -> float:
    """Analytic entropy of the diagonal Gaussian before tanh squashing."""
    log_std = np.asarray(log_std, dtype=np.float64)
    return float(np.sum(log_std + _HALF_LOG_2PIE))


# -- Checkpoint serialization -------------------------------------------------

_CKPT_MAGIC = "mlpv1"


def save_mlp(params: MlpParams, path) -> None:
    """Write a bit-exact textual checkpoint (hex floats, row-major)."""
    lines = [f"{_CKPT_MAGIC} {params.activation} {len(params.weights)}"]
    for w, b in zip(params.weights, params.biases):
        lines.append(f"{w.shape[0]} {w.shape[1]}")
        lines.append(" ".join(v.hex() for v in w.ravel()))
        lines.append(" ".join(v.hex() for v in b.ravel()))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mlp(path) -> MlpParams:
    with open(path) as fh:
        lines = fh.read().splitlines()
    head = lines[0].split()
    if len(head) != 3 or head[0] != _CKPT_MAGIC:
        raise ValueError(f"not a {_CKPT_MAGIC} checkpoint: {path}")
    activation, n_layers = head[1], int(head[2])
    weights, biases = [], []
    k = 1
    for _ in range(n_layers):
        fan_in, fan_out = (int(v) for v in lines[k].split())
        w = np.array([float.fromhex(v) for v in lines[k + 1].split()]).reshape(fan_in, fan_out)
        b = np.array([float.fromhex(v) for v in lines[k + 2].split()])
        weights.append(w)
        biases.append(b)
        k += 3
    return MlpParams(weights, biases, activation)
