"""Transformer layers built from the autodiff primitives.

Blocks are pre-norm residual (GPT-2 convention): x + Attn(LN(x)), then
+ MLP(LN(.)) with a GeLU MLP of hidden width 4*d. Attention is causally
masked unless a block is constructed bidirectional (the VQT encoder).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ConfigError, ShapeMismatch
from . import functional as F
from . import tensor as T
from .tensor import Tensor

gelu = T.gelu
softmax = T.softmax
cross_entropy = T.cross_entropy


@dataclass
class AttentionParams:
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    bq: Tensor
    bk: Tensor
    bv: Tensor
    bo: Tensor


@dataclass
class MlpParams:
    w_up: Tensor
    b_up: Tensor
    w_down: Tensor
    b_down: Tensor


@dataclass
class BlockParams:
    ln1_g: Tensor
    ln1_b: Tensor
    attn: AttentionParams
    ln2_g: Tensor
    ln2_b: Tensor
    mlp: MlpParams


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, t, d = x.shape
    x = T.reshape(x, (b, t, heads, d // heads))
    return T.swapaxes(x, 1, 2)  # [B, H, T, hd]


def _merge_heads(x: Tensor) -> Tensor:
    b, h, t, hd = x.shape
    return T.reshape(T.swapaxes(x, 1, 2), (b, t, h * hd))


def causal_self_attention(
    x: Tensor,
    p: AttentionParams,
    heads: int,
    dropout_p: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    causal: bool = True,
) -> Tensor:
    """Multi-head scaled dot-product attention.

    Accepts [T, d] or [B, T, d]; with `causal` a strict lower-triangular
    mask keeps position i from seeing positions > i. Scores are scaled by
    1/sqrt(d/heads).
    """
    squeezed = x.data.ndim == 2
    if squeezed:
        x = T.reshape(x, (1,) + x.shape)
    if x.data.ndim != 3:
        raise ShapeMismatch(f"attention expects [T, d] or [B, T, d], got {x.shape}")
    b, t, d = x.shape
    if d % heads != 0:
        raise ConfigError(f"model dim {d} not divisible by {heads} heads")
    hd = d // heads

    q = _split_heads(T.add(T.matmul(x, p.wq), p.bq), heads)
    k = _split_heads(T.add(T.matmul(x, p.wk), p.bk), heads)
    v = _split_heads(T.add(T.matmul(x, p.wv), p.bv), heads)

    scores = T.mul(T.matmul(q, T.swapaxes(k, -1, -2)), 1.0 / np.sqrt(hd))
    if causal:
        scores = T.add(scores, F.causal_bias(t, dtype=x.data.dtype))
    weights = T.softmax(scores, axis=-1)
    weights = T.dropout(weights, dropout_p, rng)
    out = _merge_heads(T.matmul(weights, v))
    out = T.add(T.matmul(out, p.wo), p.bo)
    out = T.dropout(out, dropout_p, rng)
    if squeezed:
        out = T.reshape(out, out.shape[1:])
    return out


def mlp(x: Tensor, p: MlpParams, dropout_p: float = 0.0,
        rng: Optional[np.random.Generator] = None) -> Tensor:
    h = T.gelu(T.add(T.matmul(x, p.w_up), p.b_up))
    h = T.add(T.matmul(h, p.w_down), p.b_down)
    return T.dropout(h, dropout_p, rng)


def transformer_block(
    x: Tensor,
    p: BlockParams,
    heads: int,
    dropout_p: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    causal: bool = True,
) -> Tensor:
    h = T.add(x, causal_self_attention(
        T.layer_norm(x, p.ln1_g, p.ln1_b), p.attn, heads,
        dropout_p=dropout_p, rng=rng, causal=causal))
    return T.add(h, mlp(T.layer_norm(h, p.ln2_g, p.ln2_b), p.mlp,
                        dropout_p=dropout_p, rng=rng))
