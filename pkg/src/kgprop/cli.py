"""Command-line entry point: ``kgprop <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _global_options(parser, suppress: bool):
    default = (lambda value: argparse.SUPPRESS) if suppress else (lambda value: value)
    parser.add_argument("--config", default=default(None), help="YAML pipeline configuration")
    parser.add_argument("--seed", type=int, default=default(None), help="override train.seed")
    parser.add_argument("--threads", type=int, default=default(None), help="BLAS/OpenMP thread count")
    parser.add_argument("--out-dir", default=default(None), help="artifact directory (overrides output_dir)")
    parser.add_argument("-v", "--verbose", action="count", default=default(0))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgprop", description=__doc__.splitlines()[0])
    _global_options(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="parse triples, keep the largest component")
    p.add_argument("input")
    p.add_argument("--sep", choices=("tab", "space"), default="tab")

    p = sub.add_parser("stats", parents=[common], help="graph statistics as JSON")
    p.add_argument("input", nargs="?", help="triple file or .spkg cache (default: the ingested store)")
    p.add_argument("--sep", choices=("tab", "space"), default="tab")
    p.add_argument("--exact", action="store_true", help="BFS from every entity")

    sub.add_parser("core", parents=[common], help="select the core subgraph")
    sub.add_parser("partition", parents=[common], help="split outer entities into subgraphs")

    p = sub.add_parser("train", parents=[common], help="train core embeddings")
    p.add_argument("--loss-csv", help="per-epoch loss file (default: <out-dir>/loss.csv)")

    sub.add_parser("propagate", parents=[common], help="propagate core embeddings to all entities")

    p = sub.add_parser("eval", parents=[common], help="tail-prediction metrics as JSON")
    p.add_argument("--triples", help="label triple file (default: <out-dir>/test.tsv)")
    p.add_argument("--checkpoint", help="checkpoint (default: <out-dir>/embeddings.spem)")
    p.add_argument("--ranks-csv")

    p = sub.add_parser("export", parents=[common], help="write embeddings as TSV or binary")
    p.add_argument("checkpoint")
    p.add_argument("output")
    p.add_argument("--format", choices=("tsv", "binary"), default="tsv")
    p.add_argument("--labels", help="file with one entity label per line")

    p = sub.add_parser("run", parents=[common], help="full pipeline")
    p.add_argument("--input", help="triple file (overrides the config)")
    return parser


def _load_config(args):
    from .config import PipelineConfig

    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.train.seed = args.seed
    if args.out_dir is not None:
        cfg.output_dir = args.out_dir
    if getattr(args, "input", None) and args.command == "run":
        cfg.input = args.input
    return cfg.validate()


def _print(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=str))


def _dispatch(args) -> int:
    from pathlib import Path

    from . import pipeline as pl
    from .blocs import partition
    from .embeddings import load_checkpoint
    from .graph import graph_stats, ingest_triples, load_store

    cfg = _load_config(args)
    out = Path(cfg.output_dir)
    sep = {"tab": "\t", "space": " "}.get(getattr(args, "sep", "tab"), "\t")

    if args.command == "ingest":
        store = pl.ingest(args.input, out, sep)
        _print(graph_stats(store, seed=cfg.train.seed).to_dict())
    elif args.command == "stats":
        path = Path(args.input) if args.input else out / pl.STORE_FILE
        store = load_store(path) if path.suffix == ".spkg" else ingest_triples(path, sep)
        _print(graph_stats(store, seed=cfg.train.seed, exact=args.exact).to_dict())
    elif args.command == "core":
        store = load_store(out / pl.STORE_FILE)
        core = pl.select_core(store, cfg)
        pl.save_core(store, core, out)
        _print(core.sidecar())
    elif args.command == "partition":
        store = load_store(out / pl.STORE_FILE)
        core = pl.load_core(store, out)
        part = partition(store, core, cfg.blocs.h, cfg.blocs.m, seed=cfg.train.seed)
        pl.save_partition(part, out)
        _print(part.manifest())
    elif args.command == "train":
        store = load_store(out / pl.STORE_FILE)
        core = pl.load_core(store, out)
        pl.train_phase(store, core, cfg, out)
        if args.loss_csv:
            import shutil

            shutil.copyfile(out / pl.LOSS_CSV, args.loss_csv)
    elif args.command == "propagate":
        store = load_store(out / pl.STORE_FILE)
        core = pl.load_core(store, out)
        part = pl.load_partition(out, core)
        _, report = pl.propagate_phase(store, core, part, load_checkpoint(out / pl.CORE_CKPT), cfg, out)
        _print(report.to_dict())
    elif args.command == "eval":
        ckpt = load_checkpoint(args.checkpoint or out / pl.EMB_CKPT)
        triples = pl.read_label_triples(args.triples or out / pl.TEST_TRIPLES, ckpt)
        _print(pl.evaluate_phase(ckpt, triples, cfg, out, args.ranks_csv))
    elif args.command == "export":
        unmatched = pl.export_embeddings(args.checkpoint, args.output, args.format, args.labels)
        if unmatched:
            logging.getLogger("kgprop").warning("%d labels had no embedding", len(unmatched))
    elif args.command == "run":
        result = pl.run_pipeline(cfg)
        summary = {"timings": result["timings"], "propagation": result["report"].to_dict()}
        if result["metrics"] is not None:
            summary["metrics"] = result["metrics"]
        _print(summary)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    limiter = None
    if args.threads is not None:
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
        try:  # BLAS pools already started by numpy need a runtime limit
            from threadpoolctl import threadpool_limits

            limiter = threadpool_limits(args.threads)
        except ImportError:
            pass

    from .errors import ConfigError, DataError, Diverged

    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Diverged as exc:
        print(f"{getattr(exc, 'phase', args.command)}: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, FileNotFoundError) as exc:
        print(f"{getattr(exc, 'phase', args.command)}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
