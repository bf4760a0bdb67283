"""Core subgraph extraction: degree-based and hybrid (relation-covering)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csgraph, diags_array

from .errors import DisconnectedGraph, EmptyCore
from .graph import TripleStore, bfs_path, largest_component_mask


@dataclass
class CoreSubgraph:
    """Connected induced subgraph whose embeddings are trained directly.

    ``entities`` is a sorted id array and ``triples`` the indices of the store
    triples with both endpoints inside it. ``paths`` records the reconnection
    paths added by hybrid selection (each a list of entity ids, from the
    component's seed node to the main component).
    """

    entities: np.ndarray
    triples: np.ndarray
    relation_coverage: np.ndarray
    strategy: str
    eta_n: float
    eta_e: float | None = None
    paths: list = field(default_factory=list)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def relations_covered(self) -> int:
        return int(self.relation_coverage.sum())

    def mask(self, n_entities: int) -> np.ndarray:
        m = np.zeros(n_entities, dtype=bool)
        m[self.entities] = True
        return m

    def sidecar(self) -> dict:
        return {
            "strategy": self.strategy,
            "eta_n": self.eta_n,
            "eta_e": self.eta_e,
            "n_entities": int(self.n_entities),
            "n_triples": int(len(self.triples)),
            "relations_covered": self.relations_covered,
            "relations_total": int(len(self.relation_coverage)),
        }


def _top_count(fraction: float, total: int) -> int:
    # guard against 0.05 * 20000 == 1000.0000000000001
    return max(1, min(total, math.ceil(fraction * total - 1e-9)))


def degree_order(store: TripleStore) -> np.ndarray:
    """Entity ids sorted by descending degree, ties by ascending id."""
    return np.lexsort((np.arange(store.n_entities), -store.degree))


def top_degree_entities(store: TripleStore, eta_n: float) -> np.ndarray:
    if not 0 < eta_n <= 1:
        raise ValueError(f"eta_n must lie in (0, 1], got {eta_n}")
    return degree_order(store)[: _top_count(eta_n, store.n_entities)]


def _make_core(store, mask, strategy, eta_n, eta_e=None, paths=()):
    tidx = store.induced_triples(mask)
    coverage = np.zeros(store.n_relations, dtype=bool)
    coverage[store.relations[tidx]] = True
    return CoreSubgraph(
        entities=np.flatnonzero(mask),
        triples=tidx,
        relation_coverage=coverage,
        strategy=strategy,
        eta_n=eta_n,
        eta_e=eta_e,
        paths=list(paths),
    )


def _induced_adjacency(store: TripleStore, mask: np.ndarray):
    keep = diags_array(mask.astype(np.int8))
    return (keep @ store.adjacency @ keep).tocsr()


def select_core_degree(store: TripleStore, eta_n: float) -> CoreSubgraph:
    """Top ``ceil(eta_n * n)`` entities by degree, reduced to their largest component."""
    mask = store.entity_mask(top_degree_entities(store, eta_n))
    lcc = largest_component_mask(_induced_adjacency(store, mask), within=mask)
    if not lcc.any():
        raise EmptyCore("induced core is empty")
    return _make_core(store, lcc, "degree", eta_n)


def select_core_hybrid(store: TripleStore, eta_n: float, eta_e: float) -> CoreSubgraph:
    """Union of top-degree entities and, per relation, the endpoints of its
    highest edge-degree triples; disconnected pieces are then joined to the
    largest piece through shortest paths in the full graph."""
    if not 0 <= eta_e <= 1:
        raise ValueError(f"eta_e must lie in [0, 1], got {eta_e}")
    deg = store.degree
    mask = store.entity_mask(top_degree_entities(store, eta_n))

    edge_deg = deg[store.heads] + deg[store.tails]
    # sort by relation, then edge degree descending, then triple index
    order = np.lexsort((np.arange(store.n_triples), -edge_deg, store.relations))
    rel_sorted = store.relations[order]
    starts = np.searchsorted(rel_sorted, np.arange(store.n_relations), side="left")
    ends = np.searchsorted(rel_sorted, np.arange(store.n_relations), side="right")
    for r in range(store.n_relations):
        m_r = ends[r] - starts[r]
        if m_r == 0:
            continue
        k = max(1, math.ceil(eta_e * m_r - 1e-9))
        chosen = order[starts[r] : starts[r] + k]
        mask[store.heads[chosen]] = True
        mask[store.tails[chosen]] = True

    mask, paths = reconnect(store, mask)
    return _make_core(store, mask, "hybrid", eta_n, eta_e, paths)


def reconnect(store: TripleStore, mask: np.ndarray):
    """Join every component of the induced subgraph to the largest one.

    For each non-largest component, a BFS on the full graph starts from the
    component's highest-degree entity and stops at the first entity of the
    largest component; the path's entities are added. Returns the new mask
    and the list of added paths.
    """
    mask = mask.copy()
    _, labels = csgraph.connected_components(_induced_adjacency(store, mask), directed=False)
    labels = np.where(mask, labels, -1)
    comps = [np.flatnonzero(labels == c) for c in np.unique(labels[mask])]
    if len(comps) <= 1:
        return mask, []
    sizes = [len(c) for c in comps]
    main = min(
        (i for i, s in enumerate(sizes) if s == max(sizes)), key=lambda i: comps[i][0]
    )
    target = np.zeros(store.n_entities, dtype=bool)
    target[comps[main]] = True
    deg = store.degree
    paths = []
    for i, comp in enumerate(comps):
        if i == main:
            continue
        start = comp[np.lexsort((comp, -deg[comp]))[0]]
        path = bfs_path(store.adjacency, [int(start)], target)
        if path is None:
            raise DisconnectedGraph(f"entity {start} cannot reach the main core component")
        mask[path] = True
        paths.append(path)
    return mask, paths
