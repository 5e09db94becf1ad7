import json

import numpy as np
import pytest

from motrans.evaluator import EvalMetrics, SurrogateEvaluator
from motrans.genome import SearchConfig, baseline_genome
from motrans.moead import (
    MOEAD,
    ArchiveEntry,
    CheckpointError,
    checkpoint_load,
    checkpoint_save,
    dominates,
    ep_update,
    gen_weight_vectors,
    hypervolume_2d,
    neighborhoods,
    pareto_csv,
    random_search,
    run,
    tchebyshev,
    update_ideal,
)

G = baseline_genome(1, 1, 8, 512)
TINY = SearchConfig(population=6, generations=3, neighbors=3, min_blocks=1, max_blocks=3)


def nondominated(points):
    pts = {tuple(p) for p in points}
    return {p for p in pts if not any(dominates(q, p) for q in pts)}


def union_area(points, ref):
    """Exact area of the union of [p, ref] boxes by coordinate compression."""
    pts = [p for p in points if p[0] <= ref[0] and p[1] <= ref[1]]
    xs = sorted({p[0] for p in pts} | {ref[0]})
    ys = sorted({p[1] for p in pts} | {ref[1]})
    area = 0.0
    for x0, x1 in zip(xs, xs[1:]):
        for y0, y1 in zip(ys, ys[1:]):
            if any(p[0] <= x0 and p[1] <= y0 for p in pts):
                area += (x1 - x0) * (y1 - y0)
    return area


def test_weight_vectors_two_objectives():
    w = gen_weight_vectors(5)
    assert np.allclose(w[:, 0], [0, 0.25, 0.5, 0.75, 1])
    assert np.allclose(w.sum(1), 1)


def test_weight_vectors_three_objectives_lattice():
    w = gen_weight_vectors(10, 3)
    assert w.shape == (10, 3) and np.allclose(w.sum(1), 1)
    assert len({tuple(np.round(r, 9)) for r in w}) == 10
    with pytest.raises(ValueError):
        gen_weight_vectors(11, 3)


def test_neighbourhoods_small_case():
    assert neighborhoods(gen_weight_vectors(3), 2) == [[0, 1], [1, 0], [2, 1]]
    for i, b in enumerate(neighborhoods(gen_weight_vectors(15), 3)):
        assert b[0] == i


def test_tchebyshev_and_ideal():
    assert tchebyshev((3.0, 5.0), (0.5, 0.5), (1.0, 1.0)) == 2.0
    assert tchebyshev((3.0, 5.0), (1.0, 0.0), (1.0, 1.0)) == 2.0
    assert update_ideal((2.0, 5.0), (3.0, 1.0)) == (2.0, 1.0)


def test_dominance():
    assert dominates((1, 2), (1, 3))
    assert not dominates((1, 2), (1, 2))
    assert not dominates((1, 3), (2, 2))


def test_ep_update_matches_bruteforce_filter():
    rng = np.random.default_rng(0)
    for _ in range(300):
        stream = [tuple(map(float, rng.integers(0, 6, 2))) for _ in range(rng.integers(1, 30))]
        ep = []
        for f in stream:
            ep = ep_update(ep, ArchiveEntry(G, f))
        objs = [e.objectives for e in ep]
        assert len(objs) == len(set(objs))
        assert set(objs) == nondominated(stream)


def test_hypervolume_against_box_union():
    rng = np.random.default_rng(1)
    for _ in range(100):
        pts = [tuple(map(float, rng.integers(0, 20, 2))) for _ in range(rng.integers(1, 12))]
        assert hypervolume_2d(pts, (20.0, 20.0)) == pytest.approx(union_area(pts, (20.0, 20.0)))
    assert hypervolume_2d([(1.0, 1.0)], (0.0, 0.0)) == 0.0


def test_zero_generations_returns_initial_archive():
    cfg = SearchConfig(population=5, generations=0, neighbors=2)
    ep, st, log = run(cfg, SurrogateEvaluator(), np.random.default_rng(0))
    assert len(log) == 5 and st.finished
    assert {e.objectives for e in ep} == nondominated([r.objectives for r in log])


def test_ep_is_nondominated_over_history():
    ep, st, log = run(TINY, SurrogateEvaluator(), np.random.default_rng(3))
    assert len(log) == TINY.population * (TINY.generations + 1)
    assert {e.objectives for e in ep} == nondominated([r.objectives for r in log])
    assert st.z == tuple(np.min([r.objectives for r in log], axis=0))


def test_runs_are_deterministic():
    a = run(TINY, SurrogateEvaluator(), np.random.default_rng(5))[1]
    b = run(TINY, SurrogateEvaluator(), np.random.default_rng(5))[1]
    assert a == b


def test_repeat_genomes_hit_the_cache():
    class Counting(SurrogateEvaluator):
        calls = 0

        def evaluate(self, g):
            Counting.calls += 1
            return super().evaluate(g)

    _, st, log = run(TINY, Counting(), np.random.default_rng(0))
    assert Counting.calls == sum(not r.cached for r in log)
    assert len({r.flat for r in log}) == Counting.calls


def test_failing_evaluator_does_not_stop_search():
    class Flaky(SurrogateEvaluator):
        def evaluate(self, g):
            if g.ne == 2:
                raise RuntimeError("boom")
            return super().evaluate(g)

    ep, st, log = run(TINY, Flaky(), np.random.default_rng(0))
    assert st.finished
    failed = [r for r in log if r.flat[0] == 2]
    assert failed and all(r.metrics.failed for r in failed)
    assert all(r.objectives == (100.0, TINY.k * 1e9) for r in failed)


def test_k_zero_collapses_second_objective():
    cfg = SearchConfig(population=6, generations=2, neighbors=3, k=0.0)
    ep, _, log = run(cfg, SurrogateEvaluator(), np.random.default_rng(0))
    assert all(r.objectives[1] == 0.0 for r in log)
    assert len(ep) == 1
    assert ep[0].objectives[0] == min(r.objectives[0] for r in log)


def test_checkpoint_round_trip(tmp_path):
    _, st, _ = run(TINY, SurrogateEvaluator(), np.random.default_rng(2))
    checkpoint_save(st, tmp_path / "c.json")
    assert checkpoint_load(tmp_path / "c.json") == st


def test_resume_matches_uninterrupted(tmp_path):
    full = MOEAD(TINY, SurrogateEvaluator(), np.random.default_rng(9)).run()
    part = MOEAD(TINY, SurrogateEvaluator(), np.random.default_rng(9)).run(max_steps=8)
    assert not part.finished
    checkpoint_save(part, tmp_path / "c.json")
    resumed = MOEAD(TINY, SurrogateEvaluator(), state=checkpoint_load(tmp_path / "c.json")).run()
    assert resumed == full


def test_resume_rejects_other_config(tmp_path):
    st = MOEAD(TINY, SurrogateEvaluator(), np.random.default_rng(0)).run(max_steps=2)
    with pytest.raises(ValueError):
        MOEAD(SearchConfig(), SurrogateEvaluator(), state=st)


def test_corrupt_checkpoints_raise(tmp_path):
    _, st, _ = run(TINY, SurrogateEvaluator(), np.random.default_rng(2))
    p = tmp_path / "c.json"
    checkpoint_save(st, p)
    text = p.read_text()
    p.write_text(text[: len(text) // 2])
    with pytest.raises(CheckpointError):
        checkpoint_load(p)
    doc = json.loads(text)
    doc["version"] = 999
    p.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError):
        checkpoint_load(p)


def test_pareto_csv_layout():
    m = EvalMetrics(50.0, 3.0, 1234)
    ep = [ArchiveEntry(G, (50.0, 1.5), m), ArchiveEntry(G, (40.0, 2.0), m)]
    lines = pareto_csv(ep).splitlines()
    assert lines[0] == "genome_flat,bleu,perplexity,f1,f2,params"
    assert lines[1].split(",")[3] == "40.0"
    assert lines[1].split(",")[0] == "1 1 8 512 1 1 8 8 512 1"


def test_random_search_archive():
    ep = random_search(TINY, SurrogateEvaluator(), 20, np.random.default_rng(0))
    objs = [e.objectives for e in ep]
    assert all(not dominates(a, b) for a in objs for b in objs)
