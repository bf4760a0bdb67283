"""End-to-end pipeline and the on-disk artifacts of each phase.

Every phase reads only its predecessors' files from the output directory,
so any phase can be rerun on its own:

    store.spkg          ingested graph (largest component, no inverses)
    core.tsv, core.json core triples and a sidecar with the entity list
    partition/          one entity-id file per subgraph plus manifest.json
    core.spem           trained core checkpoint, loss.csv per-epoch loss
    embeddings.spem     full-graph checkpoint, propagate_report.json
    metrics.json        link-prediction metrics (when evaluation is on)
    timings.json        wall-clock seconds per phase
"""

from __future__ import annotations

import csv
import json
import logging
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .blocs import Partition, partition, partition_stats
from .config import PipelineConfig
from .core import CoreSubgraph, select_core_degree, select_core_hybrid
from .embeddings import Checkpoint, EmbeddingMatrix, export_tsv, load_checkpoint, save_checkpoint
from .errors import CoreNotInStore, UnknownFormat
from .evaluate import link_prediction_eval, stratify
from .graph import (
    TripleStore,
    add_inverse_relations,
    graph_stats,
    ingest_triples,
    largest_connected_component,
    parse_triples,
    save_store,
    write_triples,
)
from .propagate import PropagationConfig, default_steps, init_embeddings, propagate_all
from .train import TrainConfig, train_core

logger = logging.getLogger(__name__)

ARTIFACT_VERSION = 1
PHASES = ("core_extraction", "subgraph_generation", "core_embedding", "propagation")

STORE_FILE = "store.spkg"
CORE_TRIPLES = "core.tsv"
CORE_SIDECAR = "core.json"
PARTITION_DIR = "partition"
CORE_CKPT = "core.spem"
LOSS_CSV = "loss.csv"
EMB_CKPT = "embeddings.spem"
PROP_REPORT = "propagate_report.json"
METRICS = "metrics.json"
TIMINGS = "timings.json"
TEST_TRIPLES = "test.tsv"
VALID_TRIPLES = "valid.tsv"


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _header(params: dict) -> dict:
    return {"version": ARTIFACT_VERSION, "generator": f"kgprop {__version__}", "params": params}


# --- phase artifacts -------------------------------------------------------


def ingest(input_path, out_dir, sep="\t") -> TripleStore:
    """Parse a triple file, keep its largest component and cache it."""
    store = largest_connected_component(ingest_triples(input_path, sep))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_store(store, out / STORE_FILE)
    return store


def select_core(store: TripleStore, cfg: PipelineConfig) -> CoreSubgraph:
    if cfg.core.strategy == "hybrid":
        return select_core_hybrid(store, cfg.core.eta_n, cfg.core.eta_e)
    return select_core_degree(store, cfg.core.eta_n)


def save_core(store: TripleStore, core: CoreSubgraph, out_dir) -> None:
    out = Path(out_dir)
    write_triples(store, out / CORE_TRIPLES, core.triples)
    sidecar = core.sidecar()
    sidecar.update(_header({"strategy": core.strategy, "eta_n": core.eta_n, "eta_e": core.eta_e}))
    sidecar["entities"] = [store.entity_labels[i] for i in core.entities]
    sidecar["paths"] = [[store.entity_labels[i] for i in path] for path in core.paths]
    _write_json(out / CORE_SIDECAR, sidecar)


def load_core(store: TripleStore, out_dir) -> CoreSubgraph:
    data = _read_json(Path(out_dir) / CORE_SIDECAR)
    index = store.entity_index
    missing = [label for label in data["entities"] if label not in index]
    if missing:
        raise CoreNotInStore(f"{len(missing)} core entities are absent from the store, e.g. {missing[0]!r}")
    ids = np.sort(np.array([index[label] for label in data["entities"]], dtype=np.int64))
    mask = store.entity_mask(ids)
    tidx = store.induced_triples(mask)
    coverage = np.zeros(store.n_relations, dtype=bool)
    coverage[store.relations[tidx]] = True
    return CoreSubgraph(
        entities=ids,
        triples=tidx,
        relation_coverage=coverage,
        strategy=data["strategy"],
        eta_n=data["eta_n"],
        eta_e=data["eta_e"],
        paths=[[index[label] for label in path] for path in data.get("paths", [])],
    )


def save_partition(part: Partition, out_dir) -> None:
    pdir = Path(out_dir) / PARTITION_DIR
    pdir.mkdir(parents=True, exist_ok=True)
    for old in pdir.glob("subgraph_*.txt"):
        old.unlink()
    files = []
    for i, sub in enumerate(part.subgraphs):
        name = f"subgraph_{i:05d}.txt"
        np.savetxt(pdir / name, sub, fmt="%d")
        files.append(name)
    manifest = part.manifest()
    manifest.update(_header({"h": part.h, "m": part.m}))
    manifest["files"] = files
    manifest["n_entities"] = part.n_entities
    manifest["trace"] = part.trace
    _write_json(pdir / "manifest.json", manifest)


def load_partition(out_dir, core: CoreSubgraph) -> Partition:
    pdir = Path(out_dir) / PARTITION_DIR
    manifest = _read_json(pdir / "manifest.json")
    subgraphs = [np.atleast_1d(np.loadtxt(pdir / name, dtype=np.int64)) for name in manifest["files"]]
    return Partition(
        subgraphs=subgraphs,
        n_entities=manifest["n_entities"],
        core=core.entities,
        h=manifest["h"],
        m=manifest["m"],
        trace=manifest.get("trace", {}),
    )


def train_phase(store: TripleStore, core: CoreSubgraph, cfg: PipelineConfig, out_dir) -> Checkpoint:
    aug = add_inverse_relations(store)
    t = cfg.train
    tcfg = TrainConfig(d=t.d, n_epoch=t.n_epoch, batch_size=t.b, negatives=t.p, lr=t.lr, seed=t.seed)
    result = train_core(aug, core, t.operator, tcfg)
    ckpt = Checkpoint(
        [store.entity_labels[i] for i in result.entity_ids],
        list(aug.relation_labels),
        result.entities.values,
        result.relations.values,
        t.operator,
        meta=_header({**cfg.to_dict()["train"], "phase": "core"}),
    )
    out = Path(out_dir)
    save_checkpoint(ckpt, out / CORE_CKPT)
    write_loss_csv(result.losses, out / LOSS_CSV)
    return ckpt


def write_loss_csv(losses, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "loss"])
        for i, loss in enumerate(losses):
            w.writerow([i, repr(float(loss))])


def propagation_steps(store: TripleStore, cfg: PipelineConfig) -> int:
    if cfg.propagate.T is not None:
        return int(cfg.propagate.T)
    return default_steps(graph_stats(store, seed=cfg.train.seed).approx_mspl or 1.0)


def propagate_phase(store, core, part, core_ckpt: Checkpoint, cfg: PipelineConfig, out_dir):
    aug = add_inverse_relations(store)
    if list(core_ckpt.relation_labels) != list(aug.relation_labels):
        raise UnknownFormat("core checkpoint relation table does not match the store")
    index = store.entity_index
    try:
        core_ids = np.array([index[label] for label in core_ckpt.entity_labels], dtype=np.int64)
    except KeyError as exc:
        raise CoreNotInStore(f"core checkpoint entity {exc.args[0]!r} is not in the store") from None
    emb = init_embeddings(store.n_entities, EmbeddingMatrix(core_ckpt.entities), core_ids)
    rel = EmbeddingMatrix(core_ckpt.relations, np.ones(len(core_ckpt.relations), dtype=bool))
    pcfg = PropagationConfig(propagation_steps(store, cfg), cfg.propagate.alpha, core_ckpt.operator)
    emb, report = propagate_all(aug, part, core, emb, rel, pcfg)
    ckpt = Checkpoint(
        list(store.entity_labels),
        list(aug.relation_labels),
        emb.values,
        rel.values,
        core_ckpt.operator,
        meta=_header({"T": pcfg.T, "alpha": pcfg.alpha, "phase": "propagated"}),
    )
    out = Path(out_dir)
    save_checkpoint(ckpt, out / EMB_CKPT)
    _write_json(out / PROP_REPORT, {**_header({"T": pcfg.T, "alpha": pcfg.alpha}), **report.to_dict()})
    return ckpt, report


def read_label_triples(path, ckpt: Checkpoint, sep="\t") -> np.ndarray:
    """Id triples for a label triple file, against a checkpoint's tables."""
    with open(path, encoding="utf-8") as f:
        held = parse_triples(f, sep)
    ent = {label: i for i, label in enumerate(ckpt.entity_labels)}
    rel = {label: i for i, label in enumerate(ckpt.relation_labels)}
    rows = []
    for h, r, t in held.triples.tolist():
        hl, rl, tl = held.entity_labels[h], held.relation_labels[r], held.entity_labels[t]
        if hl in ent and tl in ent and rl in rel:
            rows.append((ent[hl], rel[rl], ent[tl]))
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


def evaluate_phase(ckpt: Checkpoint, triples, cfg: PipelineConfig, out_dir=None, ranks_csv=None) -> dict:
    metrics, ranks = link_prediction_eval(
        triples,
        ckpt.entities,
        ckpt.relations,
        ckpt.operator,
        n_negatives=cfg.eval.n_negatives,
        seed=cfg.train.seed,
        return_ranks=True,
    )
    result = {**_header({"n_negatives": cfg.eval.n_negatives, "seed": cfg.train.seed}), **metrics.to_dict()}
    if out_dir is not None:
        _write_json(Path(out_dir) / METRICS, result)
    if ranks_csv is not None:
        with open(ranks_csv, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["head", "relation", "tail", "rank"])
            for (h, r, t), rank in zip(np.asarray(triples).tolist(), ranks.tolist()):
                w.writerow([ckpt.entity_labels[h], ckpt.relation_labels[r], ckpt.entity_labels[t], rank])
    return result


def export_embeddings(checkpoint_path, out_path, fmt="tsv", labels_path=None) -> list:
    """Write a checkpoint as TSV rows or copy it verbatim; returns unmatched labels."""
    ckpt = load_checkpoint(checkpoint_path)
    if fmt == "binary":
        Path(out_path).write_bytes(Path(checkpoint_path).read_bytes())
        return []
    if fmt != "tsv":
        raise UnknownFormat(f"unknown export format {fmt!r}")
    labels = None
    if labels_path is not None:
        labels = [line.rstrip("\n") for line in open(labels_path, encoding="utf-8") if line.strip()]
    return export_tsv(ckpt, out_path, labels)


# --- full run --------------------------------------------------------------


@contextmanager
def _phase(name: str, timings: dict):
    start = time.perf_counter()
    try:
        yield
    except Exception as exc:
        exc.phase = name
        logger.error("phase %s failed: %s", name, exc)
        raise
    finally:
        timings[name] = time.perf_counter() - start


def run_pipeline(cfg: PipelineConfig, store: TripleStore | None = None) -> dict:
    """Run every phase, writing artifacts to ``cfg.output_dir``.

    ``store`` may be given instead of ``cfg.input``. Returns a summary dict.
    """
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict = {}
    other: dict = {}

    with _phase("ingest", other):
        if store is None:
            if cfg.input is None:
                raise UnknownFormat("no input graph given")
            store = ingest_triples(cfg.input, cfg.sep)
        store = largest_connected_component(store)
        heldout = None
        if cfg.eval.enabled:
            split = stratify(store, cfg.eval.ratios, cfg.train.seed)
            write_triples(store, out / VALID_TRIPLES, split.valid)
            write_triples(store, out / TEST_TRIPLES, split.test)
            heldout = store.triples[split.test]
            store = store.subset(split.train)
        save_store(store, out / STORE_FILE)

    with _phase("core_extraction", timings):
        core = select_core(store, cfg)
        save_core(store, core, out)
    with _phase("subgraph_generation", timings):
        part = partition(store, core, cfg.blocs.h, cfg.blocs.m, seed=cfg.train.seed)
        save_partition(part, out)
    with _phase("core_embedding", timings):
        core_ckpt = train_phase(store, core, cfg, out)
    with _phase("propagation", timings):
        ckpt, report = propagate_phase(store, core, part, core_ckpt, cfg, out)

    metrics = None
    if heldout is not None:
        with _phase("evaluation", other):
            metrics = evaluate_phase(ckpt, heldout, cfg, out)

    _write_json(out / TIMINGS, {**_header({}), "phases": timings, "other": other})
    cfg.save(out / "config.yaml")
    return {
        "store": store,
        "core": core,
        "partition": part,
        "checkpoint": ckpt,
        "report": report,
        "metrics": metrics,
        "timings": timings,
        "partition_stats": partition_stats(part, store),
    }
