"""Synthetic knowledge graphs used by the tests and demos."""

from __future__ import annotations

import networkx as nx
import numpy as np

from .graph import TripleStore


def from_id_triples(triples, n_entities=None, n_relations=None) -> TripleStore:
    """Store with labels ``e<i>`` / ``r<k>`` from integer triples, deduplicated in order."""
    arr = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    _, first = np.unique(arr, axis=0, return_index=True)
    arr = arr[np.sort(first)]
    n_entities = n_entities if n_entities is not None else int(max(arr[:, 0].max(), arr[:, 2].max())) + 1
    n_relations = n_relations if n_relations is not None else int(arr[:, 1].max()) + 1
    return TripleStore(
        arr[:, 0],
        arr[:, 1],
        arr[:, 2],
        [f"e{i}" for i in range(n_entities)],
        [f"r{k}" for k in range(n_relations)],
    )


def preferential_attachment(n: int, edges_per_node: int = 3, n_relations: int = 1, seed=42) -> TripleStore:
    """Barabási–Albert graph with edges directed from the newer node and a
    uniformly drawn relation per edge."""
    g = nx.barabasi_albert_graph(n, edges_per_node, seed=seed)
    edges = np.array(sorted((max(u, v), min(u, v)) for u, v in g.edges()), dtype=np.int64)
    rng = np.random.default_rng(seed)
    rels = rng.integers(0, n_relations, size=len(edges))
    return from_id_triples(np.column_stack([edges[:, 0], rels, edges[:, 1]]), n, n_relations)


def planted_distmult(
    n_entities: int = 200,
    n_relations: int = 3,
    dim: int = 16,
    tails_per_query: int = 5,
    seed=0,
):
    """KG whose triples are the top-scoring tails of random DistMult embeddings.

    For every ``(h, r)`` the ``tails_per_query`` tails ``t != h`` with the
    highest ``<e_h * w_r, e_t>`` are kept. Returns the store and the
    ground-truth ``(entity, relation)`` embedding pair.
    """
    rng = np.random.default_rng(seed)
    ent = rng.normal(size=(n_entities, dim))
    rel = rng.normal(size=(n_relations, dim))
    triples = []
    for r in range(n_relations):
        scores = (ent * rel[r]) @ ent.T
        np.fill_diagonal(scores, -np.inf)
        top = np.argsort(-scores, axis=1, kind="stable")[:, :tails_per_query]
        for h in range(n_entities):
            triples.extend((h, r, int(t)) for t in top[h])
    return from_id_triples(triples, n_entities, n_relations), (ent, rel)
