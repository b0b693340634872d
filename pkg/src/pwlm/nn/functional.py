"""Pure-numpy forward formulas shared by the autodiff ops and the
graph-free inference paths, so each computation is written once.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu_np(x: np.ndarray) -> np.ndarray:
    """Exact-erf GeLU: x * Phi(x) with Phi the standard normal CDF."""
    return (0.5 * x * (1.0 + erf(x * _INV_SQRT2))).astype(x.dtype, copy=False)


def gelu_grad_np(x: np.ndarray) -> np.ndarray:
    """d/dx gelu(x) = Phi(x) + x * phi(x)."""
    phi = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
    return (0.5 * (1.0 + erf(x * _INV_SQRT2)) + x * phi).astype(x.dtype, copy=False)


def softmax_np(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax; -inf entries come out as exact zeros."""
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax_np(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    z = x - m
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def layer_norm_np(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
                  eps: float = 1e-5):
    """Normalize over the last axis. Returns (y, xhat, inv_std) so the
    backward pass can reuse the intermediates."""
    mu = np.mean(x, axis=-1, keepdims=True)
    var = np.mean((x - mu) ** 2, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    return xhat * gain + bias, xhat, inv_std


def causal_bias(t: int, dtype=np.float32) -> np.ndarray:
    """Additive attention bias [t, t]: 0 on/below the diagonal, -inf above."""
    bias = np.zeros((t, t), dtype=dtype)
    bias[np.triu_indices(t, k=1)] = -np.inf
    return bias
