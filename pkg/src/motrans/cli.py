"""Command-line interface: search, space-size, eval, export.

Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
import time
from pathlib import Path

from . import data
from .evaluator import NeuralEvaluator, SurrogateEvaluator, to_objectives
from .genome import GenomeError, SearchConfig, load_genome, render_dot, search_space_size, validate
from .moead import MOEAD, CheckpointError, checkpoint_load, checkpoint_save, pareto_csv, sorted_ep

log = logging.getLogger("motrans")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _read_config_file(path: str | None) -> tuple[dict, dict]:
    """Split a config document into SearchConfig fields and the evaluator block."""
    if not path:
        return {}, {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    ev = doc.pop("evaluator", {})
    return doc, ev


def build_config(args) -> tuple[SearchConfig, dict]:
    base, ev = _read_config_file(getattr(args, "config", None))
    overrides = {
        "seed": args.seed,
        "k": args.k,
        "population": args.pop,
        "generations": args.gens,
        "neighbors": args.neighbors,
        "embed_dim": args.embed,
        "min_blocks": args.min_blocks,
        "max_blocks": args.max_blocks,
        "heads": args.heads,
        "ffn_dims": args.dims,
        "crossover_prob": args.crossover_prob,
        "mutation_prob": args.mutation_prob,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    train = dict(base.get("train", {}))
    for k, v in (("max_epochs", args.epochs), ("batch_size", args.batch_size), ("learning_rate", args.lr)):
        if v is not None:
            train[k] = v
    if train:
        base["train"] = train
    for k in ("evaluator", "task", "tsv", "pairs", "vocab"):
        v = getattr(args, k, None)
        if v is not None:
            ev[k] = v
    try:
        return SearchConfig.from_dict(base), ev
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from e


def build_evaluator(cfg: SearchConfig, ev: dict):
    kind = ev.get("evaluator", ev.get("kind", "surrogate"))
    if kind == "surrogate":
        return SurrogateEvaluator(cfg.embed_dim, ev.get("src_vocab", 1000), ev.get("tgt_vocab", 1000))
    if kind != "neural":
        raise UsageError(f"unknown evaluator {kind!r}")
    try:
        if ev.get("tsv"):
            corpus = data.load_tsv(ev["tsv"])
        else:
            corpus = data.gen_synthetic(
                ev.get("task", "copy"),
                ev.get("pairs", 2000),
                ev.get("vocab", 16),
                tuple(ev.get("lengths", (3, 10))),
                seed=cfg.seed,
            )
    except (OSError, data.CorpusError) as e:
        raise UsageError(str(e)) from e
    return NeuralEvaluator(corpus, cfg.embed_dim, cfg.train, cfg.seed)


def _add_search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON document mirroring SearchConfig")
    p.add_argument("--seed", type=int)
    p.add_argument("--evaluator", choices=("surrogate", "neural"))
    p.add_argument("--task", choices=data.TASKS)
    p.add_argument("--tsv", help="parallel corpus, one source<TAB>target per line")
    p.add_argument("--pairs", type=int, help="synthetic corpus size")
    p.add_argument("--vocab", type=int, help="synthetic vocabulary size (incl. 4 reserved ids)")
    p.add_argument("--k", type=float, help="perplexity weight in the second objective")
    p.add_argument("--pop", type=int)
    p.add_argument("--gens", type=int)
    p.add_argument("--neighbors", type=int)
    p.add_argument("--embed", type=int, help="embedding size")
    p.add_argument("--min-blocks", type=int)
    p.add_argument("--max-blocks", type=int)
    p.add_argument("--heads", type=int, nargs="+", help="head-count domain")
    p.add_argument("--dims", type=int, nargs="+", help="FFN width domain")
    p.add_argument("--crossover-prob", type=float)
    p.add_argument("--mutation-prob", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)


def cmd_search(args) -> int:
    out = Path(args.out)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    if args.resume:
        try:
            state = checkpoint_load(args.resume)
        except (OSError, CheckpointError) as e:
            raise UsageError(f"cannot resume: {e}") from e
        cfg = state.config
        _, ev = build_config(args)
    else:
        state = None
        cfg, ev = build_config(args)
    evaluator = build_evaluator(cfg, ev)
    search = MOEAD(cfg, evaluator, state=state, init_workers=args.init_workers)

    def progress(st):
        best = min(s.objectives[0] for s in st.subproblems)
        print(f"generation {st.generation}/{cfg.generations}: best f1={best:.4f} |EP|={len(st.ep)} evaluations={len(st.eval_log)}", file=sys.stderr)

    st = search.run(max_steps=args.max_steps, on_generation=progress)
    ckpt = out / "checkpoint.json"
    out.mkdir(parents=True, exist_ok=True)
    checkpoint_save(st, ckpt)
    _write_atomic(out / "pareto.csv", pareto_csv(st.ep))
    manifest = {
        "config": cfg.to_dict(),
        "evaluator": ev,
        "seed": cfg.seed,
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "evaluations": len(st.eval_log),
        "trainings": sum(not r.cached for r in st.eval_log),
        "complete": st.finished,
        "outputs": {"pareto": str(out / "pareto.csv"), "checkpoint": str(ckpt)},
    }
    _write_atomic(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_space_size(args) -> int:
    base, _ = _read_config_file(args.config)
    if args.heads is not None:
        base["heads"] = args.heads
    if args.dims is not None:
        base["ffn_dims"] = args.dims
    heads = base.get("heads", SearchConfig.heads)
    if "embed_dim" not in base:
        base["embed_dim"] = math.lcm(*heads) if heads and all(h > 0 for h in heads) else 1
    base.setdefault("min_blocks", 1)
    base.setdefault("max_blocks", max(args.ne, args.nd, 1))
    try:
        cfg = SearchConfig.from_dict(base)
        n = search_space_size(args.ne, args.nd, cfg)
    except ValueError as e:
        raise UsageError(str(e)) from e
    print(n)
    print(f"{n:.2e}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg, ev = build_config(args)
    try:
        text = Path(args.genome).read_text(encoding="utf-8")
        g = load_genome(text)
    except OSError as e:
        raise UsageError(f"cannot read genome: {e}") from e
    except GenomeError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    errs = validate(g, cfg)
    if errs:
        for e in errs:
            print(e, file=sys.stderr)
        return EXIT_USAGE
    m = build_evaluator(cfg, ev).evaluate(g)
    doc = m.to_json() | {"objectives": list(to_objectives(m, cfg.k))}
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK


def cmd_export(args) -> int:
    try:
        st = checkpoint_load(args.checkpoint)
    except (OSError, CheckpointError) as e:
        raise UsageError(f"cannot load checkpoint: {e}") from e
    if args.pareto is None and args.genome is None:
        raise UsageError("nothing to export: pass --pareto and/or --genome")
    if args.pareto:
        _write_atomic(Path(args.pareto), pareto_csv(st.ep))
    if args.genome is not None:
        ep = sorted_ep(st.ep)
        if not 0 <= args.genome < len(ep):
            raise UsageError(f"genome index {args.genome} outside [0,{len(ep)})")
        dot = render_dot(ep[args.genome].genome, name=f"ep{args.genome}")
        if args.output:
            _write_atomic(Path(args.output), dot)
        else:
            sys.stdout.write(dot)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="motrans", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("search", help="run the MOEA/D architecture search")
    _add_search_flags(s)
    s.add_argument("--out", default="runs/latest", help="output directory")
    s.add_argument("--resume", metavar="CHECKPOINT")
    s.add_argument("--init-workers", type=int, default=1, help="parallel initial evaluations")
    s.add_argument("--max-steps", type=int, help="stop after this many steps (for staged runs)")
    s.set_defaults(func=cmd_search)

    z = sub.add_parser("space-size", help="count genomes with NE encoder and ND decoder blocks")
    z.add_argument("ne", type=int)
    z.add_argument("nd", type=int)
    z.add_argument("--config")
    z.add_argument("--heads", type=int, nargs="+")
    z.add_argument("--dims", type=int, nargs="+")
    z.set_defaults(func=cmd_space_size)

    e = sub.add_parser("eval", help="evaluate one genome (JSON object or flat integers)")
    e.add_argument("genome")
    _add_search_flags(e)
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("export", help="export Pareto CSV or a DOT schematic from a checkpoint")
    x.add_argument("checkpoint")
    x.add_argument("--pareto", metavar="CSV")
    x.add_argument("--genome", type=int, metavar="INDEX", help="EP member, in ascending f1 order")
    x.add_argument("--dot", action="store_true", help="emit DOT (the only schematic format)")
    x.add_argument("--output", "-o", help="DOT destination (default stdout)")
    x.set_defaults(func=cmd_export)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001
        log.exception("runtime failure")
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
