"""Genome -> runnable encoder-decoder model with arbitrary cross-attention wiring."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..data import PAD
from ..genome import CA, FFN, MSA, SA, Genome, LayerKind
from . import autodiff as ad
from . import layers as L
from .autodiff import Tensor


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    size: int  # heads for attention, hidden width for FFN
    source: int | None = None  # 1-based encoder block for cross-attention


@dataclass(frozen=True)
class ModelPlan:
    embed_dim: int
    src_vocab: int
    tgt_vocab: int
    encoder: tuple[tuple[LayerSpec, ...], ...]
    decoder: tuple[tuple[LayerSpec, ...], ...]
    dropout: float = 0.0  # reserved; not applied

    @property
    def wiring(self) -> tuple[int, ...]:
        return tuple(next(s.source for s in blk if s.kind is CA) for blk in self.decoder)


def build_plan(g: Genome, embed_dim: int, src_vocab: int, tgt_vocab: int) -> ModelPlan:
    """Expand each block type into its layer list, binding p_k to the k-th layer."""
    if g.ne < 1 or g.nd < 1:
        raise ValueError("genome needs at least one encoder and one decoder block")
    if g.decoders[-1].ce != g.ne or any(not 1 <= b.ce <= g.ne for b in g.decoders):
        raise ValueError("genome cross wiring is invalid")
    enc = []
    for b in g.encoders:
        enc.append(tuple(LayerSpec(k, p) for k, p in zip(b.layers, b.params)))
    dec = []
    for b in g.decoders:
        dec.append(tuple(LayerSpec(k, p, b.ce if k is CA else None) for k, p in zip(b.layers, b.params)))
    for blk in (*enc, *dec):
        for s in blk:
            if s.kind.is_attention and embed_dim % s.size:
                raise ValueError(f"{s.size} heads do not divide embedding size {embed_dim}")
    return ModelPlan(embed_dim, src_vocab, tgt_vocab, tuple(enc), tuple(dec))


def _xavier(rng, fan_in, fan_out, dtype):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out)).astype(dtype)


def _layer_params(spec: LayerSpec, d: int, rng, dtype) -> dict[str, np.ndarray]:
    if spec.kind.is_attention:
        p = {}
        for n in "qkvo":
            p["w" + n] = _xavier(rng, d, d, dtype)
            p["b" + n] = np.zeros(d, dtype)
    else:
        h = spec.size
        p = {
            "w1": _xavier(rng, d, h, dtype),
            "b1": np.zeros(h, dtype),
            "w2": _xavier(rng, h, d, dtype),
            "b2": np.zeros(d, dtype),
        }
    p["ln.g"] = np.ones(d, dtype)
    p["ln.b"] = np.zeros(d, dtype)
    return p


def init_params(plan: ModelPlan, rng: np.random.Generator, dtype=np.float32) -> dict[str, Tensor]:
    """Deterministic Xavier-uniform weights; embeddings ~ N(0, 1/d)."""
    d = plan.embed_dim
    raw: dict[str, np.ndarray] = {
        "src_embed": (rng.standard_normal((plan.src_vocab, d)) / np.sqrt(d)).astype(dtype),
        "tgt_embed": (rng.standard_normal((plan.tgt_vocab, d)) / np.sqrt(d)).astype(dtype),
    }
    for side, blocks in (("enc", plan.encoder), ("dec", plan.decoder)):
        for bi, blk in enumerate(blocks, 1):
            for li, spec in enumerate(blk, 1):
                for k, v in _layer_params(spec, d, rng, dtype).items():
                    raw[f"{side}{bi}.{li}.{k}"] = v
    raw["out.w"] = _xavier(rng, d, plan.tgt_vocab, dtype)
    raw["out.b"] = np.zeros(plan.tgt_vocab, dtype)
    return {k: Tensor(v, requires_grad=True, name=k) for k, v in raw.items()}


def _group(params: dict[str, Tensor], prefix: str) -> dict[str, Tensor]:
    n = len(prefix)
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix)}


def _apply_layer(x, spec: LayerSpec, p, *, src_pad=None, memory=None):
    ln = {"g": p["ln.g"], "b": p["ln.b"]}
    if spec.kind is SA:
        y = L.multihead_attention(x, x, spec.size, p, key_pad=src_pad)
    elif spec.kind is MSA:
        y = L.multihead_attention(x, x, spec.size, p, causal=True)
    elif spec.kind is CA:
        y = L.multihead_attention(x, memory, spec.size, p, key_pad=src_pad)
    elif spec.kind is FFN:
        y = L.feed_forward(x, p)
    else:  # pragma: no cover
        raise ValueError(spec.kind)
    # post-norm residual: norm(x + sublayer(x))
    return L.layer_norm(ad.add(x, y), ln)


EncoderHook = Callable[[int, Tensor], Tensor]


def encode(plan: ModelPlan, params: dict[str, Tensor], src: np.ndarray, enc_hook: EncoderHook | None = None):
    """Run encoder blocks in order; return every block's output and the key-pad mask."""
    src = np.asarray(src)
    src_pad = src == PAD
    x = L.positional_encode(L.embed(src, params["src_embed"]))
    outputs = []
    for bi, blk in enumerate(plan.encoder, 1):
        for li, spec in enumerate(blk, 1):
            x = _apply_layer(x, spec, _group(params, f"enc{bi}.{li}."), src_pad=src_pad)
        if enc_hook is not None:
            x = enc_hook(bi, x)
        outputs.append(x)
    return outputs, src_pad


def decode(plan: ModelPlan, params: dict[str, Tensor], memories, src_pad, tgt_in: np.ndarray) -> Tensor:
    x = L.positional_encode(L.embed(np.asarray(tgt_in), params["tgt_embed"]))
    for bi, blk in enumerate(plan.decoder, 1):
        for li, spec in enumerate(blk, 1):
            mem = None
            if spec.kind is CA:
                if not 1 <= spec.source <= len(memories):
                    raise ValueError(f"cross source {spec.source} outside [1,{len(memories)}]")
                mem = memories[spec.source - 1]
            x = _apply_layer(x, spec, _group(params, f"dec{bi}.{li}."), src_pad=src_pad, memory=mem)
    return L.output_logits(x, _group(params, "out."))


def forward(
    plan: ModelPlan,
    params: dict[str, Tensor],
    src: np.ndarray,
    tgt_in: np.ndarray,
    enc_hook: EncoderHook | None = None,
) -> Tensor:
    """Logits of shape (batch, tgt_len, tgt_vocab)."""
    memories, src_pad = encode(plan, params, src, enc_hook)
    return decode(plan, params, memories, src_pad, tgt_in)


def loss(plan: ModelPlan, params: dict[str, Tensor], src: np.ndarray, tgt: np.ndarray) -> Tensor:
    """Teacher-forced cross entropy: predict tgt[:, 1:] from tgt[:, :-1]."""
    tgt = np.asarray(tgt)
    logits = forward(plan, params, src, tgt[:, :-1])
    return L.cross_entropy(logits, tgt[:, 1:], PAD)


def count_params(params: dict[str, Tensor]) -> int:
    return sum(t.size for t in params.values())


def params_to_blob(params: dict[str, Tensor]) -> tuple[bytes, list[dict]]:
    """Concatenated raw buffers plus a manifest of (name, shape, dtype)."""
    manifest = [{"name": k, "shape": list(t.shape), "dtype": str(t.dtype)} for k, t in params.items()]
    return b"".join(np.ascontiguousarray(t.data).tobytes() for t in params.values()), manifest


def params_from_blob(blob: bytes, manifest: list[dict]) -> dict[str, Tensor]:
    out, off = {}, 0
    for m in manifest:
        dt = np.dtype(m["dtype"])
        n = int(np.prod(m["shape"], dtype=np.int64)) * dt.itemsize
        arr = np.frombuffer(blob[off : off + n], dtype=dt).reshape(m["shape"]).copy()
        out[m["name"]] = Tensor(arr, requires_grad=True, name=m["name"])
        off += n
    if off != len(blob):
        raise ValueError("parameter blob size does not match manifest")
    return out


def save_params(params: dict[str, Tensor], path) -> None:
    blob, manifest = params_to_blob(params)
    with open(path, "wb") as fh:
        header = json.dumps(manifest).encode()
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        fh.write(blob)


def load_params(path) -> dict[str, Tensor]:
    with open(path, "rb") as fh:
        n = int.from_bytes(fh.read(8), "little")
        manifest = json.loads(fh.read(n))
        return params_from_blob(fh.read(), manifest)


class Transformer:
    """A plan bound to its parameters."""

    def __init__(self, plan: ModelPlan, params: dict[str, Tensor] | None = None, seed: int = 0, dtype=np.float32):
        self.plan = plan
        self.params = params if params is not None else init_params(plan, np.random.default_rng(seed), dtype)

    @classmethod
    def from_genome(cls, g: Genome, embed_dim: int, src_vocab: int, tgt_vocab: int, seed: int = 0, dtype=np.float32):
        return cls(build_plan(g, embed_dim, src_vocab, tgt_vocab), seed=seed, dtype=dtype)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def num_params(self) -> int:
        return count_params(self.params)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def __call__(self, src, tgt_in, enc_hook: EncoderHook | None = None) -> Tensor:
        return forward(self.plan, self.params, src, tgt_in, enc_hook)

    def loss(self, src, tgt) -> Tensor:
        return loss(self.plan, self.params, src, tgt)

    def encode(self, src):
        return encode(self.plan, self.params, src)

    def decode(self, memories, src_pad, tgt_in) -> Tensor:
        return decode(self.plan, self.params, memories, src_pad, tgt_in)

