import itertools
import json

import numpy as np
import pydot
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motrans.genome import (
    DecoderBlockGene,
    EncoderBlockGene,
    Genome,
    GenomeError,
    SearchConfig,
    baseline_genome,
    decode_flat,
    encode_flat,
    load_genome,
    param_count,
    render_dot,
    search_space_size,
    validate,
)
from motrans.nn import Transformer
from motrans.variation import init_genome

from conftest import all_genomes

WIDE = SearchConfig(min_blocks=1, max_blocks=12, heads=(4, 8), ffn_dims=(512, 1024), embed_dim=512)


def test_valid_baseline_has_no_errors():
    assert validate(baseline_genome(6, 6, 8, 512), WIDE) == []


def test_validate_reports_lower_bound_for_nd():
    cfg = SearchConfig(min_blocks=3, max_blocks=7)
    g = baseline_genome(3, 2, 8, 512)
    assert "nd below lower bound" in validate(g, cfg)


def test_validate_reports_last_decoder_wiring():
    g = baseline_genome(3, 3, 8, 512)
    last = g.decoders[-1]
    bad = Genome(g.encoders, (*g.decoders[:-1], DecoderBlockGene(last.td, last.p1, last.p2, last.p3, 1)))
    assert "last decoder not wired to last encoder" in validate(bad, SearchConfig())


def test_validate_reports_domain_and_ce_violations():
    cfg = SearchConfig()
    g = Genome(
        (EncoderBlockGene(1, 3, 512), EncoderBlockGene(5, 8, 512), EncoderBlockGene(1, 8, 512)),
        (DecoderBlockGene(1, 8, 8, 512, 9), DecoderBlockGene(1, 8, 8, 512, 1), DecoderBlockGene(1, 8, 8, 512, 3)),
    )
    errs = validate(g, cfg)
    assert any("p1=3" in e for e in errs)
    assert any("te=5" in e for e in errs)
    assert any("ce=9" in e for e in errs)


def test_flat_encoding_layout():
    g = baseline_genome(1, 2, 4, 1024)
    assert encode_flat(g) == [1, 1, 4, 1024, 2, 1, 4, 4, 1024, 1, 1, 4, 4, 1024, 1]


@pytest.mark.parametrize(
    "flat",
    [[], [0], [2, 1, 8, 512], [1, 1, 8, 512, 1, 1, 8, 8, 512], [1, 1, 8, 512, 1, 1, 8, 8, 512, 1, 99]],
)
def test_decode_flat_rejects_malformed(flat):
    with pytest.raises(GenomeError):
        decode_flat(flat)


def test_decode_flat_checks_domains_when_given_config():
    flat = encode_flat(baseline_genome(2, 2, 8, 512))
    flat[2] = 16
    with pytest.raises(GenomeError):
        decode_flat(flat, SearchConfig())


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_flat_and_json_round_trip(seed):
    g = init_genome(SearchConfig(), np.random.default_rng(seed))
    assert decode_flat(encode_flat(g)) == g
    assert Genome.from_json(json.loads(json.dumps(g.to_json()))) == g
    assert load_genome(" ".join(map(str, encode_flat(g)))) == g


def test_search_space_size_headline_count():
    n = search_space_size(6, 6, WIDE)
    assert n == 16**6 * 144**5 * 24
    assert round(n / 1e19, 1) == 2.5


def test_search_space_size_matches_full_enumeration():
    cfg = SearchConfig(min_blocks=1, max_blocks=3, heads=(4,), ffn_dims=(8, 16), embed_dim=8)
    for ne, nd in [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (3, 1)]:
        gs = list(all_genomes(cfg, [ne], [nd]))
        assert all(validate(g, cfg) == [] for g in gs)
        assert len(set(gs)) == len(gs) == search_space_size(ne, nd, cfg)


def test_search_space_size_rejects_bad_counts():
    with pytest.raises(ValueError):
        search_space_size(0, 2, WIDE)


def _built_param_count(g, d, sv, tv):
    return Transformer.from_genome(g, d, sv, tv).num_params()


@pytest.mark.parametrize("seed", range(5))
def test_param_count_matches_built_model(seed):
    cfg = SearchConfig(min_blocks=1, max_blocks=4, heads=(2, 4), ffn_dims=(8, 24), embed_dim=8)
    g = init_genome(cfg, np.random.default_rng(seed))
    assert param_count(g, 8, 11, 13) == _built_param_count(g, 8, 11, 13)


def test_dot_export_parses_and_draws_cross_edges():
    g = Genome(
        (EncoderBlockGene(1, 8, 512), EncoderBlockGene(3, 4, 8)),
        (DecoderBlockGene(2, 8, 4, 1024, 1), DecoderBlockGene(3, 4, 512, 8, 2)),
    )
    (graph,) = pydot.graph_from_dot_data(render_dot(g, "demo"))
    edges = [(e.get_source(), e.get_destination(), e.get("label")) for e in graph.get_edges()]
    cross = [(s, d) for s, d, lab in edges if lab and "ce=" in lab]
    assert len(cross) == 2
    # decoder 1 reads encoder 1's last layer, decoder 2 reads encoder 2's.
    assert any(s.startswith("e1_") and d.startswith("d1_") for s, d in cross)
    assert any(s.startswith("e2_") and d.startswith("d2_") for s, d in cross)


def test_config_round_trip_and_unknown_keys():
    cfg = SearchConfig(population=7, heads=(2,), embed_dim=16)
    assert SearchConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    with pytest.raises((TypeError, ValueError)):
        SearchConfig.from_dict({"populaton": 3})


def test_config_rejects_heads_not_dividing_embed():
    with pytest.raises(ValueError):
        SearchConfig(heads=(3,), embed_dim=512)
