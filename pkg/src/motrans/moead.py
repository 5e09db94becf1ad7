"""MOEA/D search over architecture genomes.

Each of N subproblems owns a weight vector, its T nearest neighbours and an
incumbent genome.  Offspring bred from two neighbours replace any
neighbour whose Tchebyshev value they match or beat; every offspring is
offered to the external archive (EP) of non-dominated solutions.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .evaluator import EvalMetrics, Evaluator, failure_metrics, to_objectives
from .genome import Genome, SearchConfig, decode_flat, encode_flat, flat_key
from .variation import crossover, init_genome, mutate, repair

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
PARETO_HEADER = ("genome_flat", "bleu", "perplexity", "f1", "f2", "params")

Objectives = tuple[float, ...]


class CheckpointError(ValueError):
    pass


# --------------------------------------------------------------------------
# decomposition primitives


def gen_weight_vectors(n: int, m: int = 2) -> np.ndarray:
    """``n`` evenly spread weight vectors on the unit simplex, shape (n, m).

    For m = 2 the i-th vector is (i/(n-1), 1 - i/(n-1)).  For m > 2, ``n``
    must be a simplex-lattice size C(H+m-1, m-1).
    """
    if n < 2:
        raise ValueError("need at least 2 weight vectors")
    if m < 2:
        raise ValueError("need at least 2 objectives")
    if m == 2:
        a = np.arange(n) / (n - 1)
        return np.stack([a, 1.0 - a], axis=1)
    h = 1
    while math.comb(h + m - 1, m - 1) < n:
        h += 1
    if math.comb(h + m - 1, m - 1) != n:
        raise ValueError(f"{n} is not a simplex-lattice size for m={m}")
    out = []
    for bars in combinations(range(h + m - 1), m - 1):
        parts = np.diff((-1, *bars, h + m - 1)) - 1
        out.append(parts / h)
    return np.array(out[::-1])


def neighborhoods(lambdas: np.ndarray, t: int) -> list[list[int]]:
    """Indices of the ``t`` nearest weight vectors (Euclidean), ties to the lower index."""
    lambdas = np.asarray(lambdas, dtype=float)
    n = len(lambdas)
    if not 1 <= t <= n:
        raise ValueError(f"neighbourhood size {t} outside [1,{n}]")
    d = np.linalg.norm(lambdas[:, None, :] - lambdas[None, :, :], axis=-1)
    return [list(map(int, np.argsort(row, kind="stable")[:t])) for row in d]


def tchebyshev(f: Sequence[float], lam: Sequence[float], z: Sequence[float]) -> float:
    """max_j lam_j * |f_j - z_j|"""
    return max(l * abs(a - b) for a, l, b in zip(f, lam, z))


def dominates(f: Sequence[float], g: Sequence[float]) -> bool:
    """Pareto dominance under minimization."""
    return all(a <= b for a, b in zip(f, g)) and any(a < b for a, b in zip(f, g))


def update_ideal(z: Sequence[float], f: Sequence[float]) -> Objectives:
    return tuple(min(a, b) for a, b in zip(z, f))


@dataclass(frozen=True)
class ArchiveEntry:
    genome: Genome
    objectives: Objectives
    metrics: EvalMetrics | None = None


def ep_update(ep: Sequence[ArchiveEntry], entry: ArchiveEntry) -> list[ArchiveEntry]:
    """Drop members dominated by ``entry``; add it unless dominated or an exact duplicate."""
    f = entry.objectives
    if any(dominates(e.objectives, f) or tuple(e.objectives) == tuple(f) for e in ep):
        return list(ep)
    return [e for e in ep if not dominates(f, e.objectives)] + [entry]


def hypervolume_2d(points: Sequence[Sequence[float]], ref: Sequence[float]) -> float:
    """Area dominated by ``points`` and bounded by ``ref`` (minimization)."""
    pts = sorted((float(a), float(b)) for a, b in points if a <= ref[0] and b <= ref[1])
    hv, best_f2 = 0.0, float(ref[1])
    for f1, f2 in pts:
        if f2 < best_f2:
            hv += (ref[0] - f1) * (best_f2 - f2)
            best_f2 = f2
    return hv


# --------------------------------------------------------------------------
# search state


@dataclass
class Subproblem:
    index: int
    weight: tuple[float, ...]
    neighbors: tuple[int, ...]
    genome: Genome | None = None
    objectives: Objectives | None = None
    metrics: EvalMetrics | None = None


@dataclass
class EvalRecord:
    index: int
    generation: int  # -1 during initialization
    subproblem: int
    flat: tuple[int, ...]
    objectives: Objectives
    metrics: EvalMetrics
    cached: bool = False

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "generation": self.generation,
            "subproblem": self.subproblem,
            "flat": list(self.flat),
            "objectives": list(self.objectives),
            "metrics": self.metrics.to_json(),
            "cached": self.cached,
        }

    @classmethod
    def from_json(cls, d: dict) -> "EvalRecord":
        return cls(
            d["index"],
            d["generation"],
            d["subproblem"],
            tuple(d["flat"]),
            tuple(d["objectives"]),
            EvalMetrics.from_json(d["metrics"]),
            d.get("cached", False),
        )


@dataclass(eq=False)
class SearchState:
    config: SearchConfig
    rng: np.random.Generator
    subproblems: list[Subproblem] = field(default_factory=list)
    z: Objectives | None = None
    ep: list[ArchiveEntry] = field(default_factory=list)
    generation: int = 0  # completed sweeps
    cursor: int = 0  # next subproblem within the current sweep
    eval_log: list[EvalRecord] = field(default_factory=list)
    initialized: bool = False

    @property
    def finished(self) -> bool:
        return self.initialized and self.generation >= self.config.generations

    def to_json(self) -> dict:
        def entry(g, f, m):
            return {
                "genome_flat": None if g is None else encode_flat(g, check=False),
                "objectives": None if f is None else list(f),
                "metrics": None if m is None else m.to_json(),
            }

        return {
            "version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "generation": self.generation,
            "cursor": self.cursor,
            "initialized": self.initialized,
            "subproblems": [
                {"index": s.index, "weight": list(s.weight), "neighbors": list(s.neighbors)}
                | entry(s.genome, s.objectives, s.metrics)
                for s in self.subproblems
            ],
            "z": None if self.z is None else list(self.z),
            "ep": [entry(e.genome, e.objectives, e.metrics) for e in self.ep],
            "rng_state": self.rng.bit_generator.state,
            "eval_log": [r.to_json() for r in self.eval_log],
        }

    @classmethod
    def from_json(cls, d: dict) -> "SearchState":
        if not isinstance(d, dict) or "version" not in d:
            raise CheckpointError("not a checkpoint document")
        if d["version"] != CHECKPOINT_VERSION:
            raise CheckpointError(f"checkpoint version {d['version']} != {CHECKPOINT_VERSION}")
        try:
            cfg = SearchConfig.from_dict(d["config"])
            rng = np.random.default_rng()
            rng.bit_generator.state = d["rng_state"]

            def genome(x):
                return None if x is None else decode_flat(x)

            def metrics(x):
                return None if x is None else EvalMetrics.from_json(x)

            def objectives(x):
                return None if x is None else tuple(x)

            subs = [
                Subproblem(
                    s["index"],
                    tuple(s["weight"]),
                    tuple(s["neighbors"]),
                    genome(s["genome_flat"]),
                    objectives(s["objectives"]),
                    metrics(s["metrics"]),
                )
                for s in d["subproblems"]
            ]
            ep = [
                ArchiveEntry(genome(e["genome_flat"]), objectives(e["objectives"]), metrics(e["metrics"]))
                for e in d["ep"]
            ]
            return cls(
                config=cfg,
                rng=rng,
                subproblems=subs,
                z=objectives(d["z"]),
                ep=ep,
                generation=d["generation"],
                cursor=d["cursor"],
                eval_log=[EvalRecord.from_json(r) for r in d["eval_log"]],
                initialized=d["initialized"],
            )
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, CheckpointError):
                raise
            raise CheckpointError(f"corrupt checkpoint payload: {e}") from e

    def __eq__(self, other) -> bool:
        return isinstance(other, SearchState) and self.to_json() == other.to_json()


def checkpoint_save(state: SearchState, path: str | Path) -> None:
    """Atomically write ``state`` as JSON."""
    path = Path(path)
    text = json.dumps(state.to_json(), sort_keys=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def checkpoint_load(path: str | Path) -> SearchState:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt checkpoint payload: {e}") from e
    return SearchState.from_json(doc)


# --------------------------------------------------------------------------
# main loop


class MOEAD:
    """Drives one search; ``step`` processes a single subproblem so runs can pause anywhere."""

    def __init__(
        self,
        cfg: SearchConfig,
        evaluator: Evaluator,
        rng: np.random.Generator | None = None,
        state: SearchState | None = None,
        init_workers: int = 1,
    ):
        if state is not None and state.config != cfg:
            raise ValueError("checkpoint config differs from the requested config")
        self.cfg = cfg
        self.evaluator = evaluator
        self.state = state or SearchState(cfg, rng if rng is not None else np.random.default_rng(cfg.seed))
        self.init_workers = init_workers
        self._cache: dict[str, EvalMetrics] = {}
        for r in self.state.eval_log:
            self._cache.setdefault(",".join(map(str, r.flat)), r.metrics)

    @property
    def rng(self) -> np.random.Generator:
        return self.state.rng

    def _compute(self, g: Genome) -> EvalMetrics:
        try:
            return self.evaluator.evaluate(g)
        except Exception:  # evaluator failure must not stop the search
            log.exception("evaluation failed for genome %s", g)
            return failure_metrics()

    def _record(self, g: Genome, m: EvalMetrics, generation: int, sub: int, cached: bool) -> Objectives:
        f = to_objectives(m, self.cfg.k)
        self.state.eval_log.append(
            EvalRecord(len(self.state.eval_log), generation, sub, tuple(encode_flat(g, check=False)), f, m, cached)
        )
        return f

    def evaluate(self, g: Genome, generation: int, sub: int) -> tuple[EvalMetrics, Objectives]:
        key = flat_key(g)
        cached = key in self._cache
        if not cached:
            self._cache[key] = self._compute(g)
        m = self._cache[key]
        return m, self._record(g, m, generation, sub, cached)

    def initialize(self) -> None:
        st = self.state
        lambdas = gen_weight_vectors(self.cfg.population, 2)
        hoods = neighborhoods(lambdas, self.cfg.neighbors)
        genomes = [init_genome(self.cfg, self.rng) for _ in range(self.cfg.population)]
        todo = {flat_key(g): g for g in genomes}
        if self.init_workers > 1:
            with ThreadPoolExecutor(self.init_workers) as pool:
                done = dict(zip(todo, pool.map(self._compute, todo.values())))
        else:
            done = {k: self._compute(g) for k, g in todo.items()}
        st.subproblems = []
        for i, g in enumerate(genomes):
            key = flat_key(g)
            cached = key in self._cache
            m = self._cache.setdefault(key, done[key])
            f = self._record(g, m, -1, i, cached)
            st.subproblems.append(Subproblem(i, tuple(map(float, lambdas[i])), tuple(hoods[i]), g, f, m))
            st.ep = ep_update(st.ep, ArchiveEntry(g, f, m))
        objs = np.array([s.objectives for s in st.subproblems])
        st.z = tuple(float(v) for v in objs.min(axis=0))
        st.initialized = True

    def breed(self, i: int) -> Genome:
        hood = self.state.subproblems[i].neighbors
        if len(hood) >= 2:
            k, l = (int(x) for x in self.rng.choice(hood, size=2, replace=False))
        else:
            k = l = hood[0]
        xk, xl = self.state.subproblems[k].genome, self.state.subproblems[l].genome
        if self.rng.random() < self.cfg.crossover_prob:
            a, b = crossover(xk, xl, self.rng)
            y = a if self.rng.random() < 0.5 else b
        else:
            y = xk
        if self.rng.random() < self.cfg.mutation_prob:
            y = mutate(y, self.cfg, self.rng)
        return repair(y)

    def step(self) -> None:
        st = self.state
        if not st.initialized:
            self.initialize()
            return
        if st.finished:
            return
        i = st.cursor
        y = self.breed(i)
        m, fy = self.evaluate(y, st.generation, i)
        st.z = update_ideal(st.z, fy)
        for j in st.subproblems[i].neighbors:
            sj = st.subproblems[j]
            if tchebyshev(fy, sj.weight, st.z) <= tchebyshev(sj.objectives, sj.weight, st.z):
                sj.genome, sj.objectives, sj.metrics = y, fy, m
        st.ep = ep_update(st.ep, ArchiveEntry(y, fy, m))
        st.cursor += 1
        if st.cursor == self.cfg.population:
            st.cursor = 0
            st.generation += 1

    def run(
        self,
        max_steps: int | None = None,
        on_generation: Callable[[SearchState], None] | None = None,
    ) -> SearchState:
        """Step until finished, or until ``max_steps`` steps (initialization counts as one)."""
        steps = 0
        while not self.state.finished and (max_steps is None or steps < max_steps):
            gen_before = self.state.generation
            was_init = self.state.initialized
            self.step()
            steps += 1
            if on_generation is not None and (self.state.generation != gen_before or not was_init):
                on_generation(self.state)
        return self.state


def run(
    cfg: SearchConfig,
    evaluator: Evaluator,
    rng: np.random.Generator | None = None,
    init_workers: int = 1,
) -> tuple[list[ArchiveEntry], SearchState, list[EvalRecord]]:
    """Full search; returns (EP, final state, evaluation history)."""
    st = MOEAD(cfg, evaluator, rng, init_workers=init_workers).run()
    return st.ep, st, st.eval_log


def random_search(
    cfg: SearchConfig, evaluator: Evaluator, budget: int, rng: np.random.Generator
) -> list[ArchiveEntry]:
    """Baseline: archive of ``budget`` independently initialized genomes."""
    ep: list[ArchiveEntry] = []
    for _ in range(budget):
        g = init_genome(cfg, rng)
        m = evaluator.evaluate(g)
        ep = ep_update(ep, ArchiveEntry(g, to_objectives(m, cfg.k), m))
    return ep


# --------------------------------------------------------------------------
# export


def pareto_csv(ep: Sequence[ArchiveEntry]) -> str:
    """CSV rows sorted by (f1, f2); genome_flat is space-separated."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PARETO_HEADER)
    for e in sorted(ep, key=lambda e: tuple(e.objectives)):
        m = e.metrics
        w.writerow(
            [
                " ".join(map(str, encode_flat(e.genome, check=False))),
                repr(m.bleu) if m else "",
                repr(m.perplexity) if m else "",
                repr(float(e.objectives[0])),
                repr(float(e.objectives[1])),
                m.param_count if m else "",
            ]
        )
    return buf.getvalue()


def sorted_ep(ep: Sequence[ArchiveEntry]) -> list[ArchiveEntry]:
    return sorted(ep, key=lambda e: tuple(e.objectives))
