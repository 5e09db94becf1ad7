"""Population initialization, cross-attention wiring, crossover and mutation.

All operators take an explicit ``numpy.random.Generator`` and never touch
global random state, so a fixed seed reproduces every outcome.
"""

from __future__ import annotations

import enum
from dataclasses import replace

import numpy as np

from .genome import (
    DECODER_TYPES,
    ENCODER_TYPES,
    DecoderBlockGene,
    EncoderBlockGene,
    Genome,
    SearchConfig,
)


class MutationKind(enum.Enum):
    ADD_BLOCK = "add_block"
    DROP_BLOCK = "drop_block"
    ALTER_BLOCK_TYPE = "alter_block_type"
    ALTER_LAYER_PARAM = "alter_layer_param"
    REWIRE_CROSS_ATTENTION = "rewire_cross_attention"


def aligned_index(i: int, ne: int, nd: int) -> int:
    """Encoder position facing decoder ``i`` (top-aligned if ne >= nd, else bottom)."""
    return i + max(0, ne - nd)


def ce_distribution(i: int, ne: int, nd: int) -> np.ndarray:
    """Probability of each encoder 1..ne feeding decoder ``i``.

    The last decoder and, when decoders outnumber encoders, every decoder
    at or above position ``ne`` are wired to encoder ``ne``.  Otherwise the
    weight halves with each step away from the aligned encoder.
    """
    if ne < 1 or nd < 1:
        raise ValueError("ne and nd must be >= 1")
    if not 1 <= i <= nd:
        raise ValueError(f"decoder position {i} outside [1,{nd}]")
    p = np.zeros(ne)
    if i == nd or (ne < nd and i >= ne):
        p[ne - 1] = 1.0
        return p
    a = aligned_index(i, ne, nd)
    j = np.arange(1, ne + 1)
    w = np.ldexp(1.0, -np.abs(j - a))
    return w / w.sum()


def sample_ce(i: int, ne: int, nd: int, rng: np.random.Generator) -> int:
    p = ce_distribution(i, ne, nd)
    if p[-1] == 1.0:
        return ne
    j = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
    return min(j, ne - 1) + 1


def _choice(seq, rng: np.random.Generator):
    return seq[int(rng.integers(len(seq)))]


def _random_params(layers, cfg: SearchConfig, rng: np.random.Generator) -> list[int]:
    return [_choice(cfg.slot_domain(k), rng) for k in layers]


def random_encoder(cfg: SearchConfig, rng: np.random.Generator) -> EncoderBlockGene:
    te = int(rng.integers(1, len(ENCODER_TYPES) + 1))
    return EncoderBlockGene(te, *_random_params(ENCODER_TYPES[te], cfg, rng))


def random_decoder(i: int, ne: int, nd: int, cfg: SearchConfig, rng: np.random.Generator) -> DecoderBlockGene:
    td = int(rng.integers(1, len(DECODER_TYPES) + 1))
    params = _random_params(DECODER_TYPES[td], cfg, rng)
    return DecoderBlockGene(td, *params, sample_ce(i, ne, nd, rng))


def init_genome(cfg: SearchConfig, rng: np.random.Generator) -> Genome:
    ne = int(rng.integers(cfg.min_blocks, cfg.max_blocks + 1))
    nd = int(rng.integers(cfg.min_blocks, cfg.max_blocks + 1))
    enc = [random_encoder(cfg, rng) for _ in range(ne)]
    dec = [random_decoder(i, ne, nd, cfg, rng) for i in range(1, nd + 1)]
    return Genome(tuple(enc), tuple(dec))


def repair(g: Genome) -> Genome:
    """Clamp every ``ce`` into [1, ne] and pin the last decoder to encoder ne."""
    ne, nd = g.ne, g.nd
    dec = []
    for i, b in enumerate(g.decoders, 1):
        ce = ne if i == nd else min(max(b.ce, 1), ne)
        dec.append(b if ce == b.ce else replace(b, ce=ce))
    return Genome(g.encoders, tuple(dec))


def _swap_paired(xs, ys, rng: np.random.Generator):
    xs, ys = list(xs), list(ys)
    for pos in range(min(len(xs), len(ys))):
        if rng.random() < 0.5:
            xs[pos], ys[pos] = ys[pos], xs[pos]
    return tuple(xs), tuple(ys)


def crossover(a: Genome, b: Genome, rng: np.random.Generator) -> tuple[Genome, Genome]:
    """Exchange positionally paired blocks; unpaired extra blocks stay put.

    Encoders pair with encoders and decoders with decoders, counting from
    the bottom.  Each pair is swapped as a whole unit with probability 1/2.
    Children keep their parent's block counts and are returned repaired.
    """
    ea, eb = _swap_paired(a.encoders, b.encoders, rng)
    da, db = _swap_paired(a.decoders, b.decoders, rng)
    return repair(Genome(ea, da)), repair(Genome(eb, db))


def applicable_mutations(g: Genome, cfg: SearchConfig) -> list[MutationKind]:
    out = []
    if g.ne < cfg.max_blocks or g.nd < cfg.max_blocks:
        out.append(MutationKind.ADD_BLOCK)
    if g.ne > cfg.min_blocks or g.nd > cfg.min_blocks:
        out.append(MutationKind.DROP_BLOCK)
    out += [MutationKind.ALTER_BLOCK_TYPE, MutationKind.ALTER_LAYER_PARAM]
    if g.nd >= 2:
        out.append(MutationKind.REWIRE_CROSS_ATTENTION)
    return out


def _add_block(g: Genome, cfg, rng) -> Genome:
    sides = [s for s, n in (("enc", g.ne), ("dec", g.nd)) if n < cfg.max_blocks]
    side = _choice(sides, rng)
    if side == "enc":
        pos = int(rng.integers(1, g.ne + 2))
        enc = list(g.encoders)
        enc.insert(pos - 1, random_encoder(cfg, rng))
        # Keep existing decoders reading the same encoder block.
        dec = [b if b.ce < pos else replace(b, ce=b.ce + 1) for b in g.decoders]
        return repair(Genome(tuple(enc), tuple(dec)))
    pos = int(rng.integers(1, g.nd + 2))
    dec = list(g.decoders)
    dec.insert(pos - 1, random_decoder(pos, g.ne, g.nd + 1, cfg, rng))
    return repair(Genome(g.encoders, tuple(dec)))


def _drop_block(g: Genome, cfg, rng) -> Genome:
    sides = [s for s, n in (("enc", g.ne), ("dec", g.nd)) if n > cfg.min_blocks]
    side = _choice(sides, rng)
    if side == "enc":
        pos = int(rng.integers(1, g.ne + 1))
        enc = list(g.encoders)
        del enc[pos - 1]
        dec = [b if b.ce <= pos else replace(b, ce=b.ce - 1) for b in g.decoders]
        return repair(Genome(tuple(enc), tuple(dec)))
    pos = int(rng.integers(1, g.nd + 1))
    dec = list(g.decoders)
    del dec[pos - 1]
    return repair(Genome(g.encoders, tuple(dec)))


def _retyped_params(old_layers, old_params, new_layers, cfg, rng) -> list[int]:
    out = []
    for k, kind in enumerate(new_layers):
        p = old_params[k] if k < len(old_params) else None
        same_kind = k < len(old_layers) and old_layers[k].is_attention == kind.is_attention
        out.append(p if same_kind and p in cfg.slot_domain(kind) else _choice(cfg.slot_domain(kind), rng))
    return out


def _alter_block_type(g: Genome, cfg, rng) -> Genome:
    enc, dec = list(g.encoders), list(g.decoders)
    if rng.random() < 0.5:
        pos = int(rng.integers(g.ne))
        b = enc[pos]
        te = _choice([t for t in ENCODER_TYPES if t != b.te], rng)
        params = _retyped_params(b.layers, b.params, ENCODER_TYPES[te], cfg, rng)
        enc[pos] = EncoderBlockGene(te, *params)
    else:
        pos = int(rng.integers(g.nd))
        b = dec[pos]
        td = _choice([t for t in DECODER_TYPES if t != b.td], rng)
        params = _retyped_params(b.layers, b.params, DECODER_TYPES[td], cfg, rng)
        dec[pos] = DecoderBlockGene(td, *params, b.ce)
    return Genome(tuple(enc), tuple(dec))


def _alter_layer_param(g: Genome, cfg, rng) -> Genome:
    enc, dec = list(g.encoders), list(g.decoders)
    use_enc = rng.random() < 0.5
    blocks = enc if use_enc else dec
    pos = int(rng.integers(len(blocks)))
    b = blocks[pos]
    slot = int(rng.integers(len(b.layers)))
    domain = cfg.slot_domain(b.layers[slot])
    others = [v for v in domain if v != b.params[slot]]
    if others:
        blocks[pos] = replace(b, **{f"p{slot + 1}": _choice(others, rng)})
    return Genome(tuple(enc), tuple(dec))


def _rewire(g: Genome, cfg, rng) -> Genome:
    dec = list(g.decoders)
    pos = int(rng.integers(1, g.nd))  # never the last decoder
    dec[pos - 1] = replace(dec[pos - 1], ce=sample_ce(pos, g.ne, g.nd, rng))
    return Genome(g.encoders, tuple(dec))


_MUTATIONS = {
    MutationKind.ADD_BLOCK: _add_block,
    MutationKind.DROP_BLOCK: _drop_block,
    MutationKind.ALTER_BLOCK_TYPE: _alter_block_type,
    MutationKind.ALTER_LAYER_PARAM: _alter_layer_param,
    MutationKind.REWIRE_CROSS_ATTENTION: _rewire,
}


def mutate(
    g: Genome, cfg: SearchConfig, rng: np.random.Generator, kind: MutationKind | None = None
) -> Genome:
    """Apply exactly one mutation, chosen uniformly among the applicable kinds."""
    kinds = applicable_mutations(g, cfg)
    if kind is None:
        kind = _choice(kinds, rng)
    elif kind not in kinds:
        raise ValueError(f"{kind.value} not applicable to this genome")
    return repair(_MUTATIONS[kind](g, cfg, rng))
