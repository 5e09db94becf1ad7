"""Architecture genome: block genes, validity rules, flat encoding, counting.

A genome is the variable-length integer string

    ne, [te, p1, p2] * ne, nd, [td, p1, p2, p3, ce] * nd

where ``te``/``td`` pick a candidate block composition and each ``p_k``
parameterizes the k-th layer of that composition (head count for an
attention layer, hidden width for a feed-forward layer).  ``ce`` is the
1-based encoder block whose output feeds the decoder block's
cross-attention.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Sequence


class GenomeError(ValueError):
    """Raised when a genome or its flat encoding is malformed."""


class LayerKind(enum.Enum):
    SELF_ATTENTION = "SA"
    MASKED_SELF_ATTENTION = "M-MHA"
    CROSS_ATTENTION = "C-MHA"
    FEED_FORWARD = "FFN"

    @property
    def is_attention(self) -> bool:
        return self is not LayerKind.FEED_FORWARD


SA = LayerKind.SELF_ATTENTION
MSA = LayerKind.MASKED_SELF_ATTENTION
CA = LayerKind.CROSS_ATTENTION
FFN = LayerKind.FEED_FORWARD

# Candidate block compositions, keyed by type index.
ENCODER_TYPES: dict[int, tuple[LayerKind, ...]] = {
    1: (SA, FFN),
    2: (FFN, SA),
    3: (SA, SA),
    4: (FFN, FFN),
}
DECODER_TYPES: dict[int, tuple[LayerKind, ...]] = {
    1: (MSA, CA, FFN),
    2: (CA, MSA, FFN),
    3: (MSA, FFN, CA),
}

ENCODER_GENE_LEN = 3
DECODER_GENE_LEN = 5


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters for the neural evaluator."""

    max_epochs: int = 10
    patience: int = 2
    batch_size: int = 16
    learning_rate: float = 2e-3
    clip_norm: float = 1.0
    decode_max_len: int = 0  # 0: longest validation target

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.decode_max_len < 0:
            raise ValueError("decode_max_len must be >= 0")


@dataclass(frozen=True)
class SearchConfig:
    """Search-space bounds, operator rates and MOEA/D settings.

    Defaults give the full-size search; ``neighbors`` is the
    neighbourhood size T.
    """

    min_blocks: int = 3
    max_blocks: int = 7
    heads: tuple[int, ...] = (4, 8)
    ffn_dims: tuple[int, ...] = (512, 1024)
    crossover_prob: float = 0.92
    mutation_prob: float = 0.15
    population: int = 15
    generations: int = 15
    neighbors: int = 3
    k: float = 0.5
    embed_dim: int = 512
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "heads", tuple(int(h) for h in self.heads))
        object.__setattr__(self, "ffn_dims", tuple(int(h) for h in self.ffn_dims))
        if isinstance(self.train, dict):
            object.__setattr__(self, "train", TrainConfig(**self.train))
        problems = self.problems()
        if problems:
            raise ValueError("invalid SearchConfig: " + "; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if not 1 <= self.min_blocks <= self.max_blocks:
            out.append(f"block bounds [{self.min_blocks},{self.max_blocks}] invalid")
        if not self.heads:
            out.append("head-count domain is empty")
        if not self.ffn_dims:
            out.append("ffn-dim domain is empty")
        if any(h < 1 for h in self.heads) or any(h < 1 for h in self.ffn_dims):
            out.append("domain values must be positive")
        for name in ("crossover_prob", "mutation_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                out.append(f"{name}={p} outside [0,1]")
        if self.population < 2:
            out.append("population must be >= 2")
        if self.generations < 0:
            out.append("generations must be >= 0")
        if not 1 <= self.neighbors <= self.population:
            out.append(f"neighbors={self.neighbors} outside [1,{self.population}]")
        if self.k < 0:
            out.append("k must be non-negative")
        if self.embed_dim < 1:
            out.append("embed_dim must be positive")
        bad = [h for h in self.heads if h > 0 and self.embed_dim % h]
        if bad:
            out.append(f"embed_dim {self.embed_dim} not divisible by heads {bad}")
        return out

    def slot_domain(self, kind: LayerKind) -> tuple[int, ...]:
        return self.heads if kind.is_attention else self.ffn_dims

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["heads"] = list(self.heads)
        d["ffn_dims"] = list(self.ffn_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SearchConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "train" in d:
            tk = {f.name for f in fields(TrainConfig)}
            bad = set(d["train"]) - tk
            if bad:
                raise ValueError(f"unknown train config keys: {sorted(bad)}")
            d["train"] = TrainConfig(**d["train"])
        return cls(**d)


@dataclass(frozen=True)
class EncoderBlockGene:
    te: int
    p1: int
    p2: int

    @property
    def params(self) -> tuple[int, int]:
        return (self.p1, self.p2)

    @property
    def layers(self) -> tuple[LayerKind, ...]:
        return ENCODER_TYPES[self.te]


@dataclass(frozen=True)
class DecoderBlockGene:
    td: int
    p1: int
    p2: int
    p3: int
    ce: int

    @property
    def params(self) -> tuple[int, int, int]:
        return (self.p1, self.p2, self.p3)

    @property
    def layers(self) -> tuple[LayerKind, ...]:
        return DECODER_TYPES[self.td]


@dataclass(frozen=True)
class Genome:
    encoders: tuple[EncoderBlockGene, ...]
    decoders: tuple[DecoderBlockGene, ...]

    def __post_init__(self):
        object.__setattr__(self, "encoders", tuple(self.encoders))
        object.__setattr__(self, "decoders", tuple(self.decoders))

    @property
    def ne(self) -> int:
        return len(self.encoders)

    @property
    def nd(self) -> int:
        return len(self.decoders)

    @property
    def layer_count(self) -> int:
        return sum(len(b.layers) for b in self.encoders) + sum(
            len(b.layers) for b in self.decoders
        )

    def to_json(self) -> dict[str, Any]:
        return {
            "ne": self.ne,
            "encoders": [asdict(b) for b in self.encoders],
            "nd": self.nd,
            "decoders": [asdict(b) for b in self.decoders],
        }

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "Genome":
        try:
            enc = tuple(EncoderBlockGene(**{k: int(b[k]) for k in ("te", "p1", "p2")}) for b in d["encoders"])
            dec = tuple(
                DecoderBlockGene(**{k: int(b[k]) for k in ("td", "p1", "p2", "p3", "ce")})
                for b in d["decoders"]
            )
        except (KeyError, TypeError, ValueError) as e:
            raise GenomeError(f"malformed genome JSON: {e}") from e
        if int(d.get("ne", len(enc))) != len(enc) or int(d.get("nd", len(dec))) != len(dec):
            raise GenomeError("ne/nd disagree with block lists")
        return cls(enc, dec)

    def __str__(self) -> str:
        return " ".join(map(str, encode_flat(self, check=False)))


def baseline_genome(n_enc: int, n_dec: int, heads: int, ffn_dim: int) -> Genome:
    """Standard transformer layout: every decoder reads the last encoder."""
    enc = tuple(EncoderBlockGene(1, heads, ffn_dim) for _ in range(n_enc))
    dec = tuple(DecoderBlockGene(1, heads, heads, ffn_dim, n_enc) for _ in range(n_dec))
    return Genome(enc, dec)


def validate(g: Genome, cfg: SearchConfig) -> list[str]:
    """Return a description of every violated invariant; empty means valid."""
    out = []
    for name, n in (("ne", g.ne), ("nd", g.nd)):
        if n < cfg.min_blocks:
            out.append(f"{name} below lower bound")
        if n > cfg.max_blocks:
            out.append(f"{name} above upper bound")
    for i, b in enumerate(g.encoders, 1):
        if b.te not in ENCODER_TYPES:
            out.append(f"encoder {i}: te={b.te} outside [1,{len(ENCODER_TYPES)}]")
            continue
        for k, (kind, p) in enumerate(zip(b.layers, b.params), 1):
            if p not in cfg.slot_domain(kind):
                out.append(f"encoder {i}: p{k}={p} not in {kind.value} domain")
    for i, b in enumerate(g.decoders, 1):
        if b.td not in DECODER_TYPES:
            out.append(f"decoder {i}: td={b.td} outside [1,{len(DECODER_TYPES)}]")
        else:
            for k, (kind, p) in enumerate(zip(b.layers, b.params), 1):
                if p not in cfg.slot_domain(kind):
                    out.append(f"decoder {i}: p{k}={p} not in {kind.value} domain")
        if not 1 <= b.ce <= g.ne:
            out.append(f"decoder {i}: ce={b.ce} outside [1,{g.ne}]")
    if g.decoders and g.decoders[-1].ce != g.ne:
        out.append("last decoder not wired to last encoder")
    return out


def _structural_errors(g: Genome) -> list[str]:
    """Checks that do not depend on a configuration."""
    out = []
    if g.ne < 1:
        out.append("ne must be >= 1")
    if g.nd < 1:
        out.append("nd must be >= 1")
    out += [f"encoder {i}: te={b.te} outside [1,4]" for i, b in enumerate(g.encoders, 1) if b.te not in ENCODER_TYPES]
    out += [f"decoder {i}: td={b.td} outside [1,3]" for i, b in enumerate(g.decoders, 1) if b.td not in DECODER_TYPES]
    out += [f"decoder {i}: ce={b.ce} outside [1,{g.ne}]" for i, b in enumerate(g.decoders, 1) if not 1 <= b.ce <= g.ne]
    if g.decoders and g.decoders[-1].ce != g.ne:
        out.append("last decoder not wired to last encoder")
    return out


def encode_flat(g: Genome, cfg: SearchConfig | None = None, check: bool = True) -> list[int]:
    """Serialize to the canonical integer string (length 3*ne + 5*nd + 2)."""
    if check:
        errs = validate(g, cfg) if cfg is not None else _structural_errors(g)
        if errs:
            raise GenomeError("invalid genome: " + "; ".join(errs))
    xs = [g.ne]
    for b in g.encoders:
        xs += [b.te, b.p1, b.p2]
    xs.append(g.nd)
    for b in g.decoders:
        xs += [b.td, b.p1, b.p2, b.p3, b.ce]
    return xs


def decode_flat(xs: Sequence[int], cfg: SearchConfig | None = None) -> Genome:
    """Inverse of :func:`encode_flat`; raises GenomeError on any defect."""
    xs = [int(x) for x in xs]
    if not xs:
        raise GenomeError("empty flat encoding")
    ne = xs[0]
    if ne < 1:
        raise GenomeError(f"ne={ne} must be >= 1")
    pos = 1 + ENCODER_GENE_LEN * ne
    if len(xs) <= pos:
        raise GenomeError(f"flat encoding too short for ne={ne}")
    nd = xs[pos]
    if nd < 1:
        raise GenomeError(f"nd={nd} must be >= 1")
    expected = 2 + ENCODER_GENE_LEN * ne + DECODER_GENE_LEN * nd
    if len(xs) != expected:
        raise GenomeError(f"flat encoding has length {len(xs)}, expected {expected}")
    enc = tuple(EncoderBlockGene(*xs[1 + 3 * i : 4 + 3 * i]) for i in range(ne))
    dec = tuple(DecoderBlockGene(*xs[pos + 1 + 5 * i : pos + 6 + 5 * i]) for i in range(nd))
    g = Genome(enc, dec)
    errs = validate(g, cfg) if cfg is not None else _structural_errors(g)
    if errs:
        raise GenomeError("invalid genome: " + "; ".join(errs))
    return g


def flat_key(g: Genome) -> str:
    """Canonical string key (cache/dedup identity)."""
    return ",".join(map(str, encode_flat(g, check=False)))


def load_genome(text: str, cfg: SearchConfig | None = None) -> Genome:
    """Parse either the JSON object form or a flat integer list.

    Accepts ``[6, 1, 8, 512, ...]``, whitespace/comma separated integers,
    or ``{"ne": .., "encoders": [..], "nd": .., "decoders": [..]}``.
    """
    text = text.strip()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        obj = [int(t) for t in text.replace(",", " ").split()]
    if isinstance(obj, dict):
        g = Genome.from_json(obj)
        if cfg is not None:
            errs = validate(g, cfg)
            if errs:
                raise GenomeError("invalid genome: " + "; ".join(errs))
        return g
    return decode_flat(obj, cfg)


def _type_counts(types: dict[int, tuple[LayerKind, ...]], cfg: SearchConfig) -> int:
    total = 0
    for layers in types.values():
        n = 1
        for kind in layers:
            n *= len(cfg.slot_domain(kind))
        total += n
    return total


def search_space_size(ne: int, nd: int, cfg: SearchConfig) -> int:
    """Exact number of valid genomes with ``ne`` encoder and ``nd`` decoder blocks.

    Every decoder but the last picks ``ce`` from ``ne`` encoders; the last
    one is pinned to encoder ``ne``.
    """
    if ne < 1 or nd < 1:
        raise ValueError("ne and nd must be >= 1")
    per_enc = _type_counts(ENCODER_TYPES, cfg)
    per_dec = _type_counts(DECODER_TYPES, cfg)
    return per_enc**ne * (ne * per_dec) ** (nd - 1) * per_dec


def _attention_params(d: int) -> int:
    return 4 * d * d + 4 * d


def _ffn_params(d: int, h: int) -> int:
    return d * h + h + h * d + d


def layer_params(kind: LayerKind, p: int, d: int) -> int:
    """Trainable scalars of one layer including its post-norm."""
    body = _attention_params(d) if kind.is_attention else _ffn_params(d, p)
    return body + 2 * d


def param_count(g: Genome, embed_dim: int, src_vocab: int, tgt_vocab: int) -> int:
    """Trainable scalar count of the model built from ``g``.

    Source and target embeddings are separate tables; the output
    projection has a bias; each layer carries its own layer norm.
    """
    d = embed_dim
    total = src_vocab * d + tgt_vocab * d + d * tgt_vocab + tgt_vocab
    for b in (*g.encoders, *g.decoders):
        for kind, p in zip(b.layers, b.params):
            total += layer_params(kind, p, d)
    return total


def render_dot(g: Genome, name: str = "genome") -> str:
    """DOT digraph with one node per layer and one cross edge per decoder block."""
    lines = [f'digraph "{name}" {{', "  rankdir=BT;", '  node [shape=box, fontname="Helvetica"];']

    def label(kind: LayerKind, p: int) -> str:
        return f"{kind.value}\\n{'heads' if kind.is_attention else 'dim'}={p}"

    lines.append('  src [label="source embedding", shape=ellipse];')
    lines.append('  tgt [label="target embedding", shape=ellipse];')
    lines.append('  out [label="linear + softmax", shape=ellipse];')
    prev = "src"
    enc_out = {}
    lines.append("  subgraph cluster_encoder {")
    lines.append('    label="encoder";')
    for i, b in enumerate(g.encoders, 1):
        for j, (kind, p) in enumerate(zip(b.layers, b.params), 1):
            node = f"e{i}_{j}"
            lines.append(f'    {node} [label="E{i}.{j} {label(kind, p)}"];')
            lines.append(f"    {prev} -> {node};")
            prev = node
        enc_out[i] = prev
    lines.append("  }")
    prev = "tgt"
    cross = []
    lines.append("  subgraph cluster_decoder {")
    lines.append('    label="decoder";')
    for i, b in enumerate(g.decoders, 1):
        for j, (kind, p) in enumerate(zip(b.layers, b.params), 1):
            node = f"d{i}_{j}"
            lines.append(f'    {node} [label="D{i}.{j} {label(kind, p)}"];')
            lines.append(f"    {prev} -> {node};")
            if kind is CA:
                cross.append(f'  {enc_out.get(b.ce, "src")} -> {node} [style=dashed, label="ce={b.ce}"];')
            prev = node
    lines.append("  }")
    lines += cross
    lines.append(f"  {prev} -> out;")
    lines.append("}")
    return "\n".join(lines) + "\n"

