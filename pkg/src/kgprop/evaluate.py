"""Train/valid/test splitting and tail-prediction metrics.

Ranks are realistic: ties with the target count as the mean position they
could occupy. Link prediction is unfiltered and samples candidate tails
uniformly with replacement, excluding only the true tail.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from .embeddings import EmbeddingMatrix
from .errors import RelationUnseen
from .graph import TripleStore
from .operators import DISTMULT, check_operator, phi

HITS_AT = (1, 10, 50)


@dataclass
class Split:
    """Triple indices into the source store, each sorted ascending."""

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    moved_count: int = 0

    def triples(self, store: TripleStore, part: str) -> np.ndarray:
        return store.triples[getattr(self, part)]


def _union_find(n: int, heads, tails) -> DisjointSet:
    ds = DisjointSet(range(n))
    for h, t in zip(heads.tolist(), tails.tolist()):
        ds.merge(h, t)
    return ds


def stratify(store: TripleStore, ratios=(0.9, 0.05, 0.05), seed=0) -> Split:
    """Uniform random split, then move holdout triples into train until it is connected.

    Holdout triples are scanned once in index order and a triple is moved
    when its endpoints lie in different train components. Since moves only
    merge components, this equals repeatedly moving the first bridging
    triple.
    """
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.shape != (3,) or np.any(ratios < 0) or not math.isclose(ratios.sum(), 1.0, abs_tol=1e-9):
        raise ValueError("ratios must be three non-negative numbers summing to 1")
    n = store.n_triples
    n_valid = int(round(ratios[1] * n))
    n_test = min(int(round(ratios[2] * n)), n - n_valid)
    order = np.random.default_rng(seed).permutation(n)
    valid = np.sort(order[:n_valid])
    test = np.sort(order[n_valid : n_valid + n_test])
    train = np.sort(order[n_valid + n_test :])

    ds = _union_find(store.n_entities, store.heads[train], store.tails[train])
    holdout = np.sort(np.concatenate([valid, test]))
    moved = []
    for i in holdout.tolist():
        if ds.n_subsets == 1:
            break
        h, t = int(store.heads[i]), int(store.tails[i])
        if not ds.connected(h, t):
            ds.merge(h, t)
            moved.append(i)
    moved = np.asarray(moved, dtype=np.int64)
    return Split(
        train=np.sort(np.concatenate([train, moved])),
        valid=np.setdiff1d(valid, moved),
        test=np.setdiff1d(test, moved),
        moved_count=len(moved),
    )


def realistic_rank(scores, target_index: int) -> float:
    """``#{strictly better} + (#{ties incl. target} + 1) / 2`` (higher score is better)."""
    scores = np.asarray(scores)
    target = scores[target_index]
    better = int(np.count_nonzero(scores > target))
    ties = int(np.count_nonzero(scores == target))
    return better + (ties + 1) / 2


@dataclass
class LinkPredMetrics:
    mrr: float
    hits1: float
    hits10: float
    hits50: float
    mr: float
    n_evaluated: int
    n_candidates: int

    def to_dict(self) -> dict:
        return asdict(self)


def metrics_from_ranks(ranks, n_candidates: int = 0) -> LinkPredMetrics:
    ranks = [float(r) for r in ranks]
    n = len(ranks)
    if n == 0:
        return LinkPredMetrics(0.0, 0.0, 0.0, 0.0, 0.0, 0, n_candidates)
    hits = [sum(r <= k for r in ranks) / n for k in HITS_AT]
    return LinkPredMetrics(
        mrr=math.fsum(1.0 / r for r in ranks) / n,
        hits1=hits[0],
        hits10=hits[1],
        hits50=hits[2],
        mr=math.fsum(ranks) / n,
        n_evaluated=n,
        n_candidates=n_candidates,
    )


def _values(m):
    return np.asarray(m.values if isinstance(m, EmbeddingMatrix) else m)


def tail_scores(op: str, query: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Scores of candidate tail rows against a transformed head ``query``."""
    if check_operator(op) == DISTMULT:
        return candidates.astype(np.float64) @ query.astype(np.float64)
    diff = candidates.astype(np.float64) - query.astype(np.float64)
    return -np.sqrt(np.einsum("ij,ij->i", diff, diff))


def candidate_tails(target: int, n_entities: int, n_negatives: int, rng) -> np.ndarray:
    """The target followed by its negatives; all other entities when few enough."""
    if n_entities - 1 <= n_negatives:
        others = np.delete(np.arange(n_entities), target)
    else:
        others = rng.integers(0, n_entities - 1, size=n_negatives)
        others += others >= target
    return np.concatenate([[target], others])


def link_prediction_ranks(triples, emb, rel_emb, op=DISTMULT, n_negatives=10_000, seed=0) -> np.ndarray:
    """Realistic rank of the true tail for each triple.

    Triple ``i`` draws its candidates from ``default_rng([seed, i])``.
    """
    op = check_operator(op)
    e, w = _values(emb), _values(rel_emb)
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    n = len(e)
    ranks = np.empty(len(triples))
    for i, (h, r, t) in enumerate(triples.tolist()):
        cand = candidate_tails(t, n, n_negatives, np.random.default_rng([seed, i]))
        query = phi(op, e[h].astype(np.float64), w[r].astype(np.float64))
        ranks[i] = realistic_rank(tail_scores(op, query, e[cand]), 0)
    return ranks


def link_prediction_eval(triples, emb, rel_emb, op=DISTMULT, n_negatives=10_000, seed=0, return_ranks=False):
    """Unfiltered sampled tail-prediction metrics over ``triples``."""
    ranks = link_prediction_ranks(triples, emb, rel_emb, op, n_negatives, seed)
    n_cand = min(n_negatives, len(_values(emb)) - 1) + 1
    metrics = metrics_from_ranks(ranks, n_cand)
    return (metrics, ranks) if return_ranks else metrics


def queriability_probe(
    triples,
    relation: int,
    emb,
    rel_emb,
    op=DISTMULT,
    heads=None,
    candidates=None,
    k: int = 10,
) -> float:
    """Hits@k of retrieving a known tail through ``x -> phi(x, w_relation)``.

    Each probed head uses its first triple with ``relation``. Candidates
    default to every entity; a supplied candidate set always gains the
    true tail.
    """
    op = check_operator(op)
    e, w = _values(emb), _values(rel_emb)
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    sel = triples[triples[:, 1] == relation]
    if heads is not None:
        sel = sel[np.isin(sel[:, 0], np.asarray(heads))]
    if len(sel) == 0:
        raise RelationUnseen(f"relation {relation} has no triple to probe")
    _, first = np.unique(sel[:, 0], return_index=True)
    sel = sel[np.sort(first)]
    pool = np.arange(len(e)) if candidates is None else np.asarray(candidates, dtype=np.int64)
    hits = 0
    for h, _, t in sel.tolist():
        cand = np.concatenate([[t], pool[pool != t]])
        query = phi(op, e[h].astype(np.float64), w[relation].astype(np.float64))
        hits += realistic_rank(tail_scores(op, query, e[cand]), 0) <= k
    return hits / len(sel)
