"""Dense-tensor kernel: forward/backward for every block the model needs.

All tensors are 2-D float64 numpy arrays (row-major). Every backward pass is
written out analytically and validated against central finite differences by
:func:`grad_check`. Operations are deterministic for fixed inputs: summation
order is fixed and nothing reduces in parallel.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

CROSS_ENTROPY_FLOOR = 1e-12
CHECKPOINT_FORMAT_VERSION = 1


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


class CheckpointError(ValueError):
    """Raised for unreadable or version-mismatched checkpoint files."""


def as_matrix(values, name: str = "tensor") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting non-finite values."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite values")
    return arr


@dataclass
class ParamBlock:
    """A trainable matrix with its gradient accumulator."""

    name: str
    value: np.ndarray
    grad: np.ndarray

    @classmethod
    def of(cls, name: str, value) -> "ParamBlock":
        value = as_matrix(value, name)
        return cls(name=name, value=value, grad=np.zeros_like(value))

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


# ---------------------------------------------------------------------------
# Blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearCache:
    x: np.ndarray
    weight: ParamBlock
    bias: ParamBlock | None


def linear_forward(x: np.ndarray, weight: ParamBlock, bias: ParamBlock | None = None):
    """out = x @ W (+ bias broadcast over rows)."""
    if x.shape[1] != weight.value.shape[0]:
        raise ShapeError(f"linear: x {x.shape} does not conform with weight {weight.value.shape}")
    out = x @ weight.value
    if bias is not None:
        if bias.value.shape != (1, weight.value.shape[1]):
            raise ShapeError(f"linear: bias shape {bias.value.shape} must be (1, {weight.value.shape[1]})")
        out = out + bias.value
    return out, LinearCache(x=x, weight=weight, bias=bias)


def linear_backward(grad_out: np.ndarray, cache: LinearCache) -> np.ndarray:
    """Accumulate parameter gradients; return gradient w.r.t. the input."""
    cache.weight.grad += cache.x.T @ grad_out
    if cache.bias is not None:
        cache.bias.grad += grad_out.sum(axis=0, keepdims=True)
    return grad_out @ cache.weight.value.T


@dataclass(frozen=True)
class ReluCache:
    x: np.ndarray


def relu(x: np.ndarray):
    """Elementwise max(0, x)."""
    return np.maximum(x, 0.0), ReluCache(x=x)


def relu_backward(grad_out: np.ndarray, cache: ReluCache) -> np.ndarray:
    """Zero the gradient wherever the forward input was <= 0."""
    return np.where(cache.x > 0.0, grad_out, 0.0)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Numerically stable row softmax (row max subtracted before exp)."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs: np.ndarray, labels: np.ndarray, class_weights=(1.0, 1.0)):
    """Mean weighted negative log-likelihood over a batch of probability rows.

    ``probs`` must be softmax outputs; the returned gradient is w.r.t. the
    logits that produced them: weight * (p - onehot) / s. Probabilities are
    floored at 1e-12 inside the log.
    """
    labels = np.asarray(labels, dtype=np.int64)
    s = probs.shape[0]
    if labels.shape != (s,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch size {s}")
    weights = np.asarray(class_weights, dtype=np.float64)[labels]
    p_true = probs[np.arange(s), labels]
    loss = float(np.mean(weights * -np.log(np.maximum(p_true, CROSS_ENTROPY_FLOOR))))
    onehot = np.zeros_like(probs)
    onehot[np.arange(s), labels] = 1.0
    dlogits = weights[:, None] * (probs - onehot) / s
    return loss, dlogits


@dataclass(frozen=True)
class AttentionCache:
    b: np.ndarray
    w_q: ParamBlock
    w_k: ParamBlock
    w_v: ParamBlock
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    alpha: np.ndarray
    scale: float


def attention_forward(
    b: np.ndarray,
    w_q: ParamBlock,
    w_k: ParamBlock,
    w_v: ParamBlock,
    scaled: bool = False,
):
    """Batch self-attention over the rows of b.

    Q = bW_Q, K = bW_K, V = bW_V; logits = QK^T (divided by sqrt(d) only when
    ``scaled``); alpha = row softmax; B = alpha V. With a single row the
    softmax weight is exactly 1.0 and B equals bW_V bitwise.
    """
    d = b.shape[1]
    for block in (w_q, w_k, w_v):
        if block.value.shape != (d, d):
            raise ShapeError(f"attention: {block.name} shape {block.value.shape} must be ({d}, {d})")
    q = b @ w_q.value
    k = b @ w_k.value
    v = b @ w_v.value
    scale = 1.0 / math.sqrt(d) if scaled else 1.0
    alpha = softmax_rows((q @ k.T) * scale)
    out = alpha @ v
    return out, AttentionCache(b=b, w_q=w_q, w_k=w_k, w_v=w_v, q=q, k=k, v=v, alpha=alpha, scale=scale)


def attention_backward(grad_out: np.ndarray, cache: AttentionCache) -> np.ndarray:
    """Analytic gradients for b, W_Q, W_K, W_V; weight grads accumulate."""
    alpha, q, k, v, b = cache.alpha, cache.q, cache.k, cache.v, cache.b
    d_v = alpha.T @ grad_out
    d_alpha = grad_out @ v.T
    # softmax backward per row: dS_i = alpha_i * (dA_i - <dA_i, alpha_i>)
    inner = (d_alpha * alpha).sum(axis=1, keepdims=True)
    d_logits = alpha * (d_alpha - inner) * cache.scale
    d_q = d_logits @ k
    d_k = d_logits.T @ q
    cache.w_q.grad += b.T @ d_q
    cache.w_k.grad += b.T @ d_k
    cache.w_v.grad += b.T @ d_v
    return d_q @ cache.w_q.value.T + d_k @ cache.w_k.value.T + d_v @ cache.w_v.value.T


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """Bias-corrected Adam with per-parameter moment accumulators."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            m=[np.zeros_like(p.value) for p in params],
            v=[np.zeros_like(p.value) for p in params],
        )


def adam_step(params, state: AdamState) -> None:
    """One update step; gradients are zeroed afterwards."""
    if len(params) != len(state.m):
        raise ShapeError("AdamState was created for a different parameter list")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for p, m, v in zip(params, state.m, state.v):
        m[...] = state.beta1 * m + (1.0 - state.beta1) * p.grad
        v[...] = state.beta2 * v + (1.0 - state.beta2) * p.grad**2
        p.value -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.zero_grad()


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------


def grad_check(loss_and_grad, x: np.ndarray, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_and_grad(x)`` must return (scalar loss, gradient array like x).
    Error per coordinate: |a - n| / max(1e-8, |a| + |n|).
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = np.array(x, dtype=np.float64)
    _, analytic = loss_and_grad(x)
    analytic = np.array(analytic, dtype=np.float64)
    if analytic.shape != x.shape:
        raise ShapeError(f"gradient shape {analytic.shape} does not match input {x.shape}")
    worst = 0.0
    for idx in np.ndindex(x.shape):
        original = x[idx]
        x[idx] = original + eps
        loss_plus, _ = loss_and_grad(x)
        x[idx] = original - eps
        loss_minus, _ = loss_and_grad(x)
        x[idx] = original
        numeric = (loss_plus - loss_minus) / (2.0 * eps)
        err = abs(analytic[idx] - numeric) / max(1e-8, abs(analytic[idx]) + abs(numeric))
        worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Checkpoint container
# ---------------------------------------------------------------------------


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named shaped arrays as a versioned JSON container.

    Floats are serialized with repr (shortest round-trip), so the container
    is bit-exact: load_checkpoint returns the identical float64 values.
    """
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "meta": meta or {},
        "arrays": {
            name: {"shape": list(arr.shape), "data": [float(x) for x in np.asarray(arr).ravel()]}
            for name, arr in arrays.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {payload.get('format_version')!r}")
    arrays = {
        name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in payload["arrays"].items()
    }
    return arrays, payload.get("meta", {})
