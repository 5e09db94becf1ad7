import itertools

import numpy as np
import pytest

from motrans.genome import DECODER_TYPES, ENCODER_TYPES, DecoderBlockGene, EncoderBlockGene, Genome, SearchConfig


def all_genomes(cfg: SearchConfig, ne_values=None, nd_values=None):
    """Every genome satisfying the block bounds and domains of ``cfg``, by brute force."""
    ne_values = ne_values or range(cfg.min_blocks, cfg.max_blocks + 1)
    nd_values = nd_values or range(cfg.min_blocks, cfg.max_blocks + 1)
    enc_blocks = [
        EncoderBlockGene(t, *ps)
        for t, kinds in ENCODER_TYPES.items()
        for ps in itertools.product(*(cfg.slot_domain(k) for k in kinds))
    ]
    dec_shapes = [
        (t, ps)
        for t, kinds in DECODER_TYPES.items()
        for ps in itertools.product(*(cfg.slot_domain(k) for k in kinds))
    ]
    for ne in ne_values:
        for nd in nd_values:
            for enc in itertools.product(enc_blocks, repeat=ne):
                for dec in itertools.product(dec_shapes, repeat=nd):
                    for ces in itertools.product(range(1, ne + 1), repeat=nd - 1):
                        yield Genome(
                            enc,
                            tuple(DecoderBlockGene(t, *ps, c) for (t, ps), c in zip(dec, (*ces, ne))),
                        )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_cfg():
    return SearchConfig(min_blocks=1, max_blocks=3, heads=(2, 4), ffn_dims=(8, 16), embed_dim=8)
