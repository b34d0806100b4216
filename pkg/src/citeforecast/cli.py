"""Command-line workflow: synth, ingest, ppr, train, predict, evaluate, plot.

Every subcommand exits 0 on success. On failure it prints one JSON line
``{"error": <type>, "message": <text>}`` to stderr and exits non-zero.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

log = logging.getLogger("citeforecast")


def _config(args):
    from .config import RunConfig, load_config

    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    if args.config:
        return load_config(args.config, **overrides)
    return RunConfig().updated(**overrides)


def _context(dataset, cfg, args):
    from .model import GraphContext

    return GraphContext(dataset, cfg, cache_dir=getattr(args, "ppr_cache", None))


def _emit(obj):
    print(json.dumps(obj, sort_keys=True))


def cmd_synth(args):
    from .graph import save_dataset
    from .synth import SyntheticSpec, generate

    known = {f.name for f in fields(SyntheticSpec)}
    values = {"seed": args.seed if args.seed is not None else 0}
    for item in args.set or []:
        key, _, raw = item.partition("=")
        if key not in known:
            raise ValueError(f"unknown synthetic spec field {key!r}")
        values[key] = type(getattr(SyntheticSpec(), key))(raw)
    if args.n_papers is not None:
        values["n_papers"] = args.n_papers
    spec = SyntheticSpec(**values)
    dataset = generate(spec)
    directory = save_dataset(dataset, args.out)
    _emit({"papers": len(dataset.network.papers()), "years": dataset.network.years, "directory": str(directory)})


def cmd_ingest(args):
    from .graph import save_dataset, ingest

    with open(args.nodes) as n, open(args.edges) as e:
        cits = open(args.citations) if args.citations else None
        try:
            dataset = ingest(n, e, cits or [])
        finally:
            if cits:
                cits.close()
    directory = save_dataset(dataset, args.out)
    _emit({"nodes": len(dataset.network.node_ids), "years": dataset.network.years, "directory": str(directory)})


def cmd_ppr(args):
    from .graph import MetapathSpec, load_dataset, metapath_subgraph
    from .ppr import PPRCache

    cfg = _config(args)
    dataset = load_dataset(args.dataset)
    seed = args.seed if args.seed is not None else cfg.train.ppr_seed
    cache = PPRCache(cfg.ppr, seed=seed, directory=args.out)
    started = time.perf_counter()
    count = 0
    for year in dataset.network.years:
        snap = dataset.network.snapshot(year)
        for name in cfg.train.metapaths:
            cache.get(metapath_subgraph(snap, MetapathSpec.parse(name)))
            count += 1
    _emit({"subgraphs": count, "directory": str(args.out), "seconds": round(time.perf_counter() - started, 3)})


def cmd_train(args):
    from .graph import load_dataset
    from .training import repeat_runs, save_checkpoint, train

    cfg = _config(args)
    dataset = load_dataset(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = _context(dataset, cfg, args)
    if args.repeats > 1:
        reports, mean, std = repeat_runs(dataset, cfg, args.repeats, split=args.split, ctx=ctx)
        rows = [r.to_dict() | {"seed": cfg.train.seed + i} for i, r in enumerate(reports)]
        summary = {"repeats": args.repeats, "split": args.split, "mean": mean, "std": std, "runs": rows}
        (out / "repeats.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
        _emit({k: summary[k] for k in ("repeats", "split", "mean", "std")})
        return
    resume = args.resume if args.resume else None
    result = train(dataset, cfg, ctx=ctx, resume=resume, out_dir=out)
    save_checkpoint(result.last, out / "last.pt")
    best = min(result.history, key=lambda r: r["val_mae"] if np.isfinite(r["val_mae"]) else np.inf)
    _emit(
        {
            "best": str(out / "best.pt"),
            "epochs": len(result.history) - 1,
            "best_epoch": best["epoch"],
            "best_val_mae": best["val_mae"],
            "seconds": round(result.seconds, 3),
        }
    )


def _paper_ids(args, dataset, cfg):
    from .training import split_papers

    if args.papers:
        return [int(p) for p in args.papers.split(",") if p.strip()]
    return split_papers(dataset, cfg)[args.split]


def cmd_predict(args):
    from .config import RunConfig
    from .graph import load_dataset
    from .plotting import write_predictions
    from .training import load_checkpoint, predict

    ckpt = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    cfg = RunConfig.from_dict(ckpt["config"]) if "config" in ckpt else RunConfig()
    ids = _paper_ids(args, dataset, cfg)
    ctx = _context(dataset, cfg, args) if ckpt["kind"] == "model" else None
    got, preds, skipped = predict(ckpt, dataset, ids, ctx)
    known = [int(p) in dataset.citations for p in got]
    truth = None
    if len(got) and all(known):
        truth = np.log1p(np.array([dataset.citations[int(p)] for p in got], dtype=np.float64))
    path = write_predictions(args.out, got, preds, truth)
    _emit({"predictions": str(path), "papers": len(got), "skipped": skipped})


def cmd_evaluate(args):
    from .config import RunConfig
    from .graph import load_dataset
    from .training import evaluate, load_checkpoint

    ckpt = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    cfg = RunConfig.from_dict(ckpt["config"]) if "config" in ckpt else _config(args)
    ctx = _context(dataset, cfg, args) if ckpt["kind"] == "model" else None
    report = evaluate(ckpt, dataset, args.split, ctx=ctx, cfg=cfg).to_dict()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True))
    _emit(report)


def cmd_plot(args):
    from . import plotting

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if args.kind == "curves":
        ids, preds, truth = plotting.read_predictions(args.source)
        written.append(plotting.curve_grid(ids, preds, truth, out / "curves.png", n=args.n))
    elif args.kind == "report":
        report = json.loads(Path(args.source).read_text())
        written.append(plotting.error_bars(report, out / "errors.png"))
    else:
        from .config import RunConfig
        from .graph import load_dataset
        from .training import embed, load_checkpoint, split_papers

        if not args.dataset:
            raise ValueError("embedding plots need --dataset")
        ckpt = load_checkpoint(args.source)
        dataset = load_dataset(args.dataset)
        cfg = RunConfig.from_dict(ckpt["config"])
        ids = split_papers(dataset, cfg)[args.split]
        got, h = embed(ckpt, dataset, ids, _context(dataset, cfg, args))
        values = np.log1p([dataset.citations[int(p)][-1] for p in got])
        written.extend(plotting.embedding_scatter(got, h, values, out / "embeddings.png", out / "embeddings.csv"))
    _emit({"files": [str(p) for p in written]})


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that raises instead of printing usage and exiting."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="citeforecast", description="Cold-start citation series forecasting")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, seed=True):
        if config:
            p.add_argument("--config", help="flat YAML file of config overrides")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="random seed")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p, config=False)
    p.add_argument("--n-papers", type=int, default=None)
    p.add_argument("--set", action="append", metavar="FIELD=VALUE", help="other synthetic spec fields")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate JSONL records into a dataset directory")
    p.add_argument("nodes")
    p.add_argument("edges")
    p.add_argument("citations", nargs="?")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("ppr", help="precompute PPR rows for every snapshot and metapath")
    common(p)
    p.add_argument("dataset")
    p.add_argument("--out", required=True, help="cache directory")
    p.set_defaults(func=cmd_ppr)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("dataset")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--repeats", type=int, default=1, help="train N times with consecutive seeds")
    p.add_argument("--split", default="test", help="split reported by --repeats")
    p.add_argument("--resume", help="continue from a last.pt checkpoint")
    p.add_argument("--ppr-cache", help="PPR cache directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write predicted series as CSV")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--papers", help="comma-separated paper ids (default: the chosen split)")
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--ppr-cache")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="MAE/RMSE report for a split")
    common(p, seed=False)
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--split", default="test")
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--ppr-cache")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot", help="static figures")
    p.add_argument("kind", choices=["curves", "report", "embeddings"])
    p.add_argument("source", help="predictions CSV, report JSON, or checkpoint")
    p.add_argument("--dataset", help="dataset directory (embeddings)")
    p.add_argument("--split", default="test")
    p.add_argument("-n", type=int, default=9, help="papers in the curve grid")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--ppr-cache")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(json.dumps({"error": "UsageError", "message": str(exc)}), file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # one machine-parseable line, non-zero exit
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
