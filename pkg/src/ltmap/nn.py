"""Minimal MLP engine: forward, exact reverse-mode gradients, AdamW, cosine LR.

Only the fixed feed-forward topology used by the map components is supported:
a stack of affine layers with GELU hidden units and either an identity or
Softplus output. Gradients are hand-derived and flow to both parameters and
inputs, which is what the transport map needs to backpropagate through
context values produced by earlier components.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf, expit

__all__ = [
    "Mlp",
    "AdamWState",
    "CosineSchedule",
    "make_mlp",
    "mlp_forward",
    "mlp_forward_cached",
    "mlp_backward",
    "mlp_param_arrays",
    "softplus",
    "softplus_inv",
    "adamw_step",
    "cosine_lr",
    "clip_global_norm",
]

_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _gelu(x):
    return x * 0.5 * (1.0 + erf(x / np.sqrt(2.0)))


def _gelu_grad(x):
    # d/dx [x Phi(x)] = Phi(x) + x N(x; 0, 1), with the exact-erf Phi
    return 0.5 * (1.0 + erf(x / np.sqrt(2.0))) + x * _INV_SQRT2PI * np.exp(-0.5 * x * x)


def softplus(x):
    """log(1 + e^x), stable for large |x|."""
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    """Inverse of softplus on y > 0: log(e^y - 1)."""
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0):
        raise ValueError("softplus_inv requires positive input")
    out = np.log(np.expm1(y))
    return float(out) if out.ndim == 0 else out


_OUTPUT_ACTIVATIONS = ("identity", "softplus")


@dataclass
class Mlp:
    """Affine layer stack; weights[i] has shape (fan_in, fan_out)."""

    weights: list
    biases: list
    output_activation: str = "identity"

    def __post_init__(self):
        if self.output_activation not in _OUTPUT_ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {_OUTPUT_ACTIVATIONS}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be nonempty lists of equal length")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} mismatch")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i}: fan-in does not chain from layer {i - 1}")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def make_mlp(in_dim, out_dim, hidden=(64, 64, 64), rng=None, output_activation="identity",
             final_weight_scale=None, final_bias=0.0) -> Mlp:
    """He fan-in initialized MLP.

    `final_weight_scale` overrides the last layer's weight std (use 0 for an
    exactly-zero head); `final_bias` sets its bias. With in_dim = 0 the net
    degenerates gracefully to learned constants.
    """
    if rng is None:
        rng = np.random.default_rng()
    dims = [int(in_dim)] + [int(h) for h in hidden] + [int(out_dim)]
    weights, biases = [], []
    for i in range(len(dims) - 1):
        fan_in = max(dims[i], 1)
        scale = np.sqrt(2.0 / fan_in)
        if i == len(dims) - 2 and final_weight_scale is not None:
            scale = final_weight_scale / np.sqrt(fan_in)
        weights.append(rng.normal(0.0, 1.0, size=(dims[i], dims[i + 1])) * scale)
        b = np.zeros(dims[i + 1])
        if i == len(dims) - 2:
            b += final_bias
        biases.append(b)
    return Mlp(weights=weights, biases=biases, output_activation=output_activation)


def mlp_forward(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    """Forward pass on a (B, in_dim) batch."""
    return mlp_forward_cached(mlp, x)[0]


def mlp_forward_cached(mlp: Mlp, x: np.ndarray):
    """Forward pass keeping pre-activations for the backward pass."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != mlp.in_dim:
        raise ValueError(f"expected input shape (B, {mlp.in_dim}), got {x.shape}")
    inputs = [x]  # layer inputs
    pre = []      # pre-activations
    h = x
    last = len(mlp.weights) - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        a = h @ w + b
        pre.append(a)
        if i < last:
            h = _gelu(a)
            inputs.append(h)
        else:
            h = softplus(a) if mlp.output_activation == "softplus" else a
    return h, (inputs, pre)


def mlp_backward(mlp: Mlp, cache, dy: np.ndarray):
    """Reverse-mode gradients: returns ([dW...], [db...], dx)."""
    inputs, pre = cache
    dy = np.asarray(dy, dtype=np.float64)
    if dy.shape != (inputs[0].shape[0], mlp.out_dim):
        raise ValueError(f"cotangent shape {dy.shape} does not match output")
    if mlp.output_activation == "softplus":
        da = dy * expit(pre[-1])
    else:
        da = dy
    dws = [None] * len(mlp.weights)
    dbs = [None] * len(mlp.biases)
    for i in range(len(mlp.weights) - 1, -1, -1):
        dws[i] = inputs[i].T @ da
        dbs[i] = da.sum(axis=0)
        da = da @ mlp.weights[i].T
        if i > 0:
            da = da * _gelu_grad(pre[i - 1])
    return dws, dbs, da


def mlp_param_arrays(mlp: Mlp) -> list:
    """Flat list [W0, b0, W1, b1, ...] referencing the live arrays."""
    out = []
    for w, b in zip(mlp.weights, mlp.biases):
        out.append(w)
        out.append(b)
    return out


@dataclass
class AdamWState:
    """Decoupled-weight-decay Adam over one flat parameter vector."""

    n_params: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-5
    step: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.n_params)
        if self.v is None:
            self.v = np.zeros(self.n_params)
        if self.m.shape != (self.n_params,) or self.v.shape != (self.n_params,):
            raise ValueError("moment accumulators must match parameter count")


def adamw_step(state: AdamWState, params: np.ndarray, grads: np.ndarray,
               lr: float) -> np.ndarray:
    """One AdamW update; mutates state, returns the new parameter vector.

    Weight decay is decoupled: applied directly to the parameters, scaled by
    lr but not by the adaptive moments.
    """
    if params.shape != (state.n_params,) or grads.shape != (state.n_params,):
        raise ValueError("params/grads do not match optimizer state size")
    if not np.all(np.isfinite(grads)):
        raise ValueError("non-finite gradient passed to optimizer")
    state.step += 1
    t = state.step
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1**t)
    v_hat = state.v / (1.0 - state.beta2**t)
    out = params * (1.0 - lr * state.weight_decay)
    out = out - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out


@dataclass(frozen=True)
class CosineSchedule:
    """Half-cosine decay from lr0 at epoch 0 to lr_min at epoch = total."""

    lr0: float = 1e-3
    lr_min: float = 1e-6
    total: int = 3000

    def __post_init__(self):
        if self.total < 1 or self.lr0 <= 0 or not 0 <= self.lr_min <= self.lr0:
            raise ValueError("invalid schedule parameters")


def cosine_lr(schedule: CosineSchedule, epoch: int) -> float:
    if not 0 <= epoch <= schedule.total:
        raise ValueError(f"epoch {epoch} outside [0, {schedule.total}]")
    return schedule.lr_min + 0.5 * (schedule.lr0 - schedule.lr_min) * (
        1.0 + np.cos(np.pi * epoch / schedule.total))


def clip_global_norm(grads: np.ndarray, max_norm: float) -> np.ndarray:
    """Rescale the gradient vector if its 2-norm exceeds max_norm."""
    norm = float(np.linalg.norm(grads))
    if norm > max_norm:
        return grads * (max_norm / norm)
    return grads
