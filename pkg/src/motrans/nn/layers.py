"""Transformer layers expressed with the autodiff ops."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

MASK_VALUE = -1e9


@lru_cache(maxsize=16)
def _sinusoid(max_len: int, d: int) -> np.ndarray:
    pos = np.arange(max_len)[:, None]
    i = np.arange(0, d, 2)[None, :]
    angle = pos / np.power(10000.0, i / d)
    pe = np.zeros((max_len, d))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d // 2])
    pe.setflags(write=False)
    return pe


def positional_encode(x: Tensor) -> Tensor:
    """Add fixed sinusoidal position codes to a (batch, seq, d) tensor."""
    _, s, d = x.shape
    return ad.add(x, _sinusoid(max(s, 64), d)[:s].astype(x.dtype))


def embed(ids: np.ndarray, table: Tensor) -> Tensor:
    """Token lookup scaled by sqrt(d)."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ValueError(f"token id outside vocabulary of size {table.shape[0]}")
    return ad.scale(ad.embedding(table, ids), math.sqrt(table.shape[1]))


def layer_norm(x: Tensor, p: dict[str, Tensor]) -> Tensor:
    return ad.layer_norm(x, p["g"], p["b"])


def feed_forward(x: Tensor, p: dict[str, Tensor]) -> Tensor:
    if x.shape[-1] != p["w1"].shape[0]:
        raise ValueError(f"feature dim {x.shape[-1]} != {p['w1'].shape[0]}")
    return ad.linear(ad.relu(ad.linear(x, p["w1"], p["b1"])), p["w2"], p["b2"])


def attention_mask(
    q_len: int, k_len: int, key_pad: np.ndarray | None, causal: bool, dtype
) -> np.ndarray | None:
    """Additive mask broadcastable to (batch, heads, q_len, k_len)."""
    mask = None
    if key_pad is not None:
        mask = np.where(key_pad[:, None, None, :], MASK_VALUE, 0.0).astype(dtype)
    if causal:
        c = np.triu(np.full((q_len, k_len), MASK_VALUE, dtype=dtype), k=1)
        mask = c if mask is None else mask + c
    return mask


def multihead_attention(
    q_input: Tensor,
    kv_input: Tensor,
    heads: int,
    p: dict[str, Tensor],
    causal: bool = False,
    key_pad: np.ndarray | None = None,
    return_weights: bool = False,
):
    """Scaled dot-product attention over ``heads`` heads.

    ``key_pad`` is a boolean (batch, k_len) array marking keys to ignore.
    With ``causal`` set, query position i sees keys 0..i only.
    """
    b, s, d = q_input.shape
    bk, t, dk = kv_input.shape
    if dk != d or bk != b:
        raise ValueError(f"query {q_input.shape} and key/value {kv_input.shape} shapes disagree")
    if d % heads:
        raise ValueError(f"{heads} heads do not divide dim {d}")
    if causal and s != t:
        raise ValueError("causal attention needs equal query and key lengths")
    dh = d // heads
    q = ad.transpose(ad.reshape(ad.linear(q_input, p["wq"], p["bq"]), (b, s, heads, dh)), (0, 2, 1, 3))
    k = ad.transpose(ad.reshape(ad.linear(kv_input, p["wk"], p["bk"]), (b, t, heads, dh)), (0, 2, 3, 1))
    v = ad.transpose(ad.reshape(ad.linear(kv_input, p["wv"], p["bv"]), (b, t, heads, dh)), (0, 2, 1, 3))
    scores = ad.scale(ad.matmul(q, k), 1.0 / math.sqrt(dh))
    w = ad.softmax(scores, attention_mask(s, t, key_pad, causal, q_input.dtype))
    ctx = ad.reshape(ad.transpose(ad.matmul(w, v), (0, 2, 1, 3)), (b, s, d))
    out = ad.linear(ctx, p["wo"], p["bo"])
    return (out, w.data) if return_weights else out


def output_logits(x: Tensor, p: dict[str, Tensor]) -> Tensor:
    return ad.linear(x, p["w"], p["b"])


def cross_entropy(logits: Tensor, targets: np.ndarray, pad_id: int = 0) -> Tensor:
    return ad.cross_entropy(logits, targets, pad_id)
