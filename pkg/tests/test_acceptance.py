"""End-to-end acceptance checks, one test per criterion."""

import time
from collections import deque

import numpy as np
import pytest

from kgprop.blocs import partition
from kgprop.cli import main
from kgprop.config import PipelineConfig
from kgprop.core import select_core_degree, select_core_hybrid
from kgprop.embeddings import EmbeddingMatrix, load_checkpoint
from kgprop.evaluate import metrics_from_ranks, queriability_probe, realistic_rank
from kgprop.graph import add_inverse_relations, write_triples
from kgprop.pipeline import run_pipeline
from kgprop.propagate import (
    PropagationConfig,
    gradient_equivalence_check,
    init_embeddings,
    propagate_all,
    propagate_whole_graph,
)
from kgprop.synthetic import from_id_triples, planted_distmult, preferential_attachment
from kgprop.train import TrainConfig, batch_loss_grads, sample_negatives, train_core
from kgprop.train import init_embeddings as init_core

from conftest import record_acceptance
from test_evaluate import brute_metrics, enumerated_rank, hand_cases


def adjacency(triples, n):
    adj = [[] for _ in range(n)]
    for h, _, t in np.asarray(triples).tolist():
        adj[h].append(t)
        adj[t].append(h)
    return adj


def bfs_connected(adj, nodes):
    nodes = set(nodes)
    start = next(iter(nodes))
    seen, queue = {start}, deque([start])
    while queue:
        for v in adj[queue.popleft()]:
            if v in nodes and v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == len(nodes)


def test_1_blocs_requirements():
    store = preferential_attachment(20_000, 3, 1, seed=42)
    start = time.process_time()
    core = select_core_degree(store, 0.05)
    part = partition(store, core, 0.6, 2000)
    elapsed = time.process_time() - start

    adj = adjacency(store.triples, store.n_entities)
    core_set = set(core.entities.tolist())
    connected = sum(bfs_connected(adj, set(s.tolist()) | core_set) for s in part.subgraphs)
    covered = set()
    for s in part.subgraphs:
        covered.update(s.tolist())
    outer = set(range(store.n_entities)) - core_set
    coverage = len(outer & covered) / len(outer)
    largest = max(len(set(s.tolist())) for s in part.subgraphs)

    ok = connected == len(part.subgraphs) and coverage == 1.0 and largest <= 2000 and elapsed <= 60
    detail = (f"{connected}/{len(part.subgraphs)} connected with core, coverage {coverage:.0%}, "
              f"max size {largest}, {elapsed:.1f}s cpu")
    assert record_acceptance(1, "BLOCS connectivity, coverage and size bound", ok, detail), detail


def test_2_propagation_is_a_gradient_step(toy_kg):
    assert toy_kg.n_entities == 50 and toy_kg.n_relations == 6
    core = np.argsort(-toy_kg.degree, kind="stable")[:10]
    rng = np.random.default_rng(0)
    emb = rng.normal(size=(50, 16))
    rel = rng.normal(size=(6, 16))
    res = gradient_equivalence_check(toy_kg, emb, rel, core, alpha=0.5, fd_step=1e-4)

    # independent loop: the energy terms with u as tail, stepped by alpha, then
    # normalised, must match one real propagation step
    tail_grad = np.zeros_like(emb)
    for h, r, t in toy_kg.triples.tolist():
        tail_grad[t] -= emb[h] * rel[r]
    step = emb - 0.5 * tail_grad
    step /= np.linalg.norm(step, axis=1, keepdims=True)
    matrix = EmbeddingMatrix(emb.copy(), np.isin(np.arange(50), core))
    propagate_whole_graph(toy_kg, core, matrix, EmbeddingMatrix(rel), PropagationConfig(1, 0.5))
    outer = np.setdiff1d(np.arange(50), core)
    step_gap = float(np.max(np.abs(matrix.values[outer] - step[outer])))

    ok = res.max_deviation <= 1e-6 and res.fd_relative_error <= 1e-4 and step_gap <= 1e-6
    detail = (f"max deviation {res.max_deviation:.2e}, fd relative error {res.fd_relative_error:.2e}, "
              f"propagated vs loop step {step_gap:.1e}")
    assert record_acceptance(2, "propagation update equals energy gradient step", ok, detail), detail


def test_3_metric_oracle_exactness():
    cases = hand_cases()
    assert len(cases) == 20 and all(len(s) <= 10 for s, _ in cases)
    ranks = [realistic_rank(s, t) for s, t in cases]
    ranks_ok = ranks == [enumerated_rank(s, t) for s, t in cases]
    got = metrics_from_ranks(ranks).to_dict()
    metrics_ok = all(got[k] == v for k, v in brute_metrics(cases).items())
    ok = ranks_ok and metrics_ok
    assert record_acceptance(3, "ranks and metrics equal brute-force enumeration", ok, "20 cases")


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    cfg = PipelineConfig(output_dir=str(tmp_path_factory.mktemp("run")))
    cfg.blocs.m = 300
    cfg.train.d, cfg.train.n_epoch, cfg.train.b, cfg.train.p = 16, 3, 128, 8
    return cfg, run_pipeline(cfg, store=preferential_attachment(3000, 3, 4, seed=3))


def test_4_normalization_invariants(small_run):
    cfg, result = small_run
    ckpt = result["checkpoint"]
    trained = load_checkpoint(f"{cfg.output_dir}/core.spem")
    index = {label: i for i, label in enumerate(ckpt.entity_labels)}
    core_rows = np.array([index[label] for label in trained.entity_labels])
    core_ok = np.array_equal(ckpt.entities[core_rows], trained.entities)

    outer = np.setdiff1d(np.arange(len(ckpt.entity_labels)), core_rows)
    norms = np.linalg.norm(ckpt.entities[outer].astype(np.float64), axis=1)
    nonzero = norms[norms > 0]
    worst = float(np.max(np.abs(nonzero - 1.0)))
    ok = core_ok and worst <= 1e-5
    detail = f"{len(nonzero)} propagated rows, worst |norm - 1| {worst:.1e}, core rows identical: {core_ok}"
    assert record_acceptance(4, "unit-norm outer rows, untouched core rows", ok, detail), detail


def test_5_single_subgraph_equals_whole_graph():
    base = preferential_attachment(1500, 3, 4, seed=5)
    core = select_core_degree(base, 0.05)
    aug = add_inverse_relations(base)
    trained = train_core(aug, core, "distmult", TrainConfig(d=16, n_epoch=2, batch_size=128, negatives=8, seed=5))
    rel = EmbeddingMatrix(trained.relations.values)
    cfg = PropagationConfig(6, 1.0, "distmult")

    a = init_embeddings(base.n_entities, trained.entities, trained.entity_ids)
    b = a.copy()
    outer = np.flatnonzero(~core.mask(base.n_entities))
    propagate_all(aug, [outer], core, a, rel, cfg)
    propagate_whole_graph(aug, core, b, rel, cfg)
    ok = np.array_equal(a.values, b.values)
    assert record_acceptance(5, "single-subgraph partition equals whole-graph propagation", ok)


def rare_relation_kg():
    base = preferential_attachment(1000, 2, 35, seed=8)
    deg = base.degree
    leaves = np.flatnonzero(deg == deg.min())
    extra = []
    for k in range(5):
        u, v = int(leaves[2 * k]), int(leaves[2 * k + 1])
        extra.append((u, 35 + k, v))
    return from_id_triples(np.vstack([base.triples, extra]), base.n_entities, 40)


def test_6_hybrid_core_covers_all_relations():
    store = rare_relation_kg()
    adj = adjacency(store.triples, store.n_entities)
    hybrid = select_core_hybrid(store, 0.05, 0.005)
    degree = select_core_degree(store, 0.05)

    def covered(core):
        return set(store.relations[core.triples].tolist())

    rare_missed = set(range(35, 40)) - covered(degree)
    hybrid_connected = bfs_connected(adj, hybrid.entities.tolist())
    ok = len(covered(hybrid)) == 40 and hybrid_connected and len(rare_missed) >= 1
    detail = (f"hybrid {len(covered(hybrid))}/40 (connected: {hybrid_connected}), "
              f"degree-only {len(covered(degree))}/40 missing {len(rare_missed)} of 5 rare")
    assert record_acceptance(6, "hybrid core covers every relation", ok, detail), detail


def test_7_training_sanity():
    store, _ = planted_distmult(200, 3, 16, 5, seed=0)
    aug = add_inverse_relations(store)
    core = select_core_degree(aug, 1.0)
    res = train_core(aug, core, "distmult", TrainConfig(d=32, n_epoch=50, batch_size=64, negatives=16, lr=1e-2, seed=0))
    ent = np.zeros((store.n_entities, 32))
    ent[res.entity_ids] = res.entities.values
    rel = res.relations.values.astype(np.float64)
    pos_triples = store.triples
    neg_triples = sample_negatives(pos_triples, 100, store.n_entities, np.random.default_rng(1))

    def score(tr):
        return np.einsum("ij,ij->i", ent[tr[:, 0]] * rel[tr[:, 1]], ent[tr[:, 2]])

    pos, neg = score(pos_triples), score(neg_triples)
    separation = (pos.mean() - neg.mean()) / neg.std()

    rng = np.random.default_rng(2)
    fd_errors = {}
    for op in ("distmult", "transe", "rotate"):
        e, w = rng.normal(size=(8, 4)), rng.normal(size=(3, 4))
        p = np.column_stack([rng.integers(0, 8, 5), rng.integers(0, 3, 5), rng.integers(0, 8, 5)])
        n = sample_negatives(p, 4, 8, rng)
        _, g_e, g_w = batch_loss_grads(op, e, w, p, n)
        worst = 0.0
        for x, g in ((e, g_e), (w, g_w)):
            num = np.zeros_like(x)
            for idx in np.ndindex(x.shape):
                orig = x[idx]
                x[idx] = orig + 1e-5
                lp = batch_loss_grads(op, e, w, p, n)[0]
                x[idx] = orig - 1e-5
                lm = batch_loss_grads(op, e, w, p, n)[0]
                x[idx] = orig
                num[idx] = (lp - lm) / 2e-5
            worst = max(worst, np.linalg.norm(num - g) / np.linalg.norm(num))
        fd_errors[op] = worst

    ok = separation >= 2 and all(v <= 1e-4 for v in fd_errors.values())
    detail = f"separation {separation:.2f} sd, fd " + ", ".join(f"{k} {v:.1e}" for k, v in fd_errors.items())
    assert record_acceptance(7, "training separates positives and gradients check out", ok, detail), detail


def test_8_queriability_improves_over_init(tmp_path):
    pairs = []
    for seed in range(5):
        store, _ = planted_distmult(300, 3, 16, 5, seed=seed)
        cfg = PipelineConfig(output_dir=str(tmp_path / f"s{seed}"))
        cfg.core.eta_n, cfg.blocs.m = 0.3, 200
        cfg.train.d, cfg.train.n_epoch, cfg.train.b, cfg.train.p = 32, 50, 64, 16
        cfg.train.lr, cfg.train.seed = 1e-2, seed
        result = run_pipeline(cfg, store=store)
        ckpt, kept = result["checkpoint"], result["store"]
        index = {label: i for i, label in enumerate(ckpt.entity_labels)}
        relabel = np.array([index[label] for label in kept.entity_labels])
        triples = kept.triples.copy()
        triples[:, 0], triples[:, 2] = relabel[triples[:, 0]], relabel[triples[:, 2]]
        outer = np.setdiff1d(relabel, relabel[result["core"].entities])

        ent0, rel0 = init_core("distmult", len(ckpt.entity_labels), len(ckpt.relation_labels), 32,
                               np.random.default_rng(seed))
        trained = queriability_probe(triples, 0, ckpt.entities, ckpt.relations, heads=outer)
        untrained = queriability_probe(triples, 0, ent0, rel0, heads=outer)
        pairs.append((trained, untrained))

    ok = all(a > b for a, b in pairs)
    detail = ", ".join(f"{a:.2f}>{b:.2f}" for a, b in pairs)
    assert record_acceptance(8, "pipeline embeddings beat untrained init on the probe", ok, detail), detail


def test_9_run_is_deterministic(tmp_path, capsys):
    graph = tmp_path / "graph.tsv"
    write_triples(preferential_attachment(2000, 3, 4, seed=9), graph)
    cfg = PipelineConfig(input=str(graph))
    cfg.blocs.m = 300
    cfg.train.d, cfg.train.n_epoch, cfg.train.b, cfg.train.p = 16, 3, 128, 8
    cfg.eval.enabled, cfg.eval.n_negatives = True, 200
    conf = tmp_path / "c.yaml"
    cfg.save(conf)
    codes = [main(["run", "--config", str(conf), "--out-dir", str(tmp_path / d), "--seed", "4"]) for d in "ab"]
    a = (tmp_path / "a" / "embeddings.spem").read_bytes()
    b = (tmp_path / "b" / "embeddings.spem").read_bytes()
    ok = codes == [0, 0] and a == b
    assert record_acceptance(9, "two runs give byte-identical checkpoints", ok, f"{len(a)} bytes"), "checkpoints differ"
