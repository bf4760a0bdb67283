"""Balanced, local, overlapping, connected subgraphs covering the outer graph.

The partitioner grows subgraphs on the full graph (core included) with three
mechanisms: *diffusion* adds every neighbour of the current set, *dilation*
adds only neighbours not yet assigned to any subgraph, and *merging* fuses
small overlapping subgraphs. Only non-core entities are tracked as
(un)assigned; the core is merged back with every subgraph at propagation time.
"""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import csgraph

from .core import CoreSubgraph, degree_order
from .errors import CoreNotInStore
from .graph import TripleStore, bfs_path

logger = logging.getLogger(__name__)

SPLIT_FRACTION = 0.2
DIFFUSION_FRACTION = 0.8
DIFFUSION_EVERY = 5
DIFFUSION_BURST = 10


@dataclass
class Partition:
    """Ordered list of overlapping subgraphs (sorted entity-id arrays)."""

    subgraphs: list
    n_entities: int
    core: np.ndarray
    h: float
    m: int
    trace: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.subgraphs)

    @cached_property
    def core_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_entities, dtype=bool)
        mask[self.core] = True
        return mask

    @cached_property
    def assignment_counts(self) -> np.ndarray:
        counts = np.zeros(self.n_entities, dtype=np.int64)
        for sub in self.subgraphs:
            counts[sub] += 1
        return counts

    def assignment(self, u: int) -> list:
        """Indices of the subgraphs containing entity ``u``."""
        return [i for i, sub in enumerate(self.subgraphs) if _contains(sub, u)]

    def manifest(self) -> dict:
        stats = partition_stats(self)
        return {
            "h": self.h,
            "m": self.m,
            "n_subgraphs": len(self.subgraphs),
            "replication_factor": stats["replication_factor"],
            "max_size": stats["max_size"],
            "coverage": stats["coverage"],
        }


def _contains(sorted_ids: np.ndarray, u: int) -> bool:
    i = np.searchsorted(sorted_ids, u)
    return i < len(sorted_ids) and sorted_ids[i] == u


def neighbors_of(adjacency, nodes: np.ndarray) -> np.ndarray:
    """Sorted unique union of the neighbourhoods of ``nodes``."""
    indptr, indices = adjacency.indptr, adjacency.indices
    starts, ends = indptr[nodes], indptr[np.asarray(nodes) + 1]
    lengths = ends - starts
    total = int(lengths.sum())
    if total == 0:
        return np.empty(0, dtype=indices.dtype)
    offsets = np.repeat(starts - np.cumsum(lengths) + lengths, lengths)
    return np.unique(indices[offsets + np.arange(total)])


def split_neighbors(store: TripleStore, v: int, max_size: float) -> list:
    """Star subgraphs ``{v} ∪ chunk`` over ``v``'s neighbours, chunks of ``max_size``."""
    chunk = max(1, int(max_size))
    nbrs = store.neighbors(v)
    return [np.union1d(nbrs[i : i + chunk], [v]) for i in range(0, len(nbrs), chunk)]


def diffuse(store: TripleStore, seed_set, m: int) -> np.ndarray:
    """Grow ``seed_set`` by whole neighbourhoods while it stays below ``0.8 m``.

    Returns the last set smaller than ``0.8 m`` (the seed itself if it is
    already that large), or the fixpoint if growth stalls first.
    """
    limit = DIFFUSION_FRACTION * m
    current = np.unique(np.asarray(seed_set, dtype=np.int64))
    if len(current) == 0:
        raise ValueError("seed set must be non-empty")
    if len(current) >= limit:
        return current
    inside = np.zeros(store.n_entities, dtype=bool)
    inside[current] = True
    frontier = current
    adj = store.adjacency
    while True:
        nb = neighbors_of(adj, frontier)
        new = nb[~inside[nb]]
        if len(new) == 0 or len(current) + len(new) >= limit:
            return current
        inside[new] = True
        current = np.union1d(current, new)
        frontier = new


def dilate(store: TripleStore, subgraphs, unassigned: np.ndarray, frontiers=None):
    """Let every subgraph absorb its unassigned neighbours, in list order.

    ``unassigned`` is updated in place, so an entity adjacent to several
    subgraphs joins the earliest one. Only neighbours of ``frontiers``
    (default: the whole subgraphs) are examined; since earlier members had
    all their neighbours assigned already, passing the entities absorbed in
    the previous round gives the same result. Returns the new subgraph list
    and the entities each one absorbed.
    """
    adj = store.adjacency
    frontiers = list(subgraphs) if frontiers is None else frontiers
    out, absorbed = list(subgraphs), []
    for i, frontier in enumerate(frontiers):
        if len(frontier) == 0:
            absorbed.append(frontier)
            continue
        nb = neighbors_of(adj, frontier)
        new = nb[unassigned[nb]]
        unassigned[new] = False
        if len(new):
            out[i] = np.union1d(out[i], new)
        absorbed.append(new)
    return out, absorbed


class _Blocs:
    def __init__(self, store: TripleStore, core_mask: np.ndarray, h: float, m: int):
        self.store = store
        self.adj = store.adjacency
        self.core_mask = core_mask
        self.h = h
        self.m = m
        self.unassigned = ~core_mask
        self.n_unassigned = int(self.unassigned.sum())
        self.n_outer = self.n_unassigned
        self.order = degree_order(store)
        self._cursor = 0
        self.subgraphs: list[np.ndarray] = []
        self.frontiers: list[np.ndarray] = []
        self.trace = Counter()

    def _assign(self, nodes: np.ndarray):
        new = nodes[self.unassigned[nodes]]
        self.unassigned[new] = False
        self.n_unassigned -= len(new)
        return new

    def _append(self, sub: np.ndarray):
        self.subgraphs.append(sub)
        self.frontiers.append(sub)
        self._assign(sub)

    def _next_seed(self) -> int:
        # assigned entities never become unassigned, so the cursor only advances
        while not self.unassigned[self.order[self._cursor]]:
            self._cursor += 1
        return int(self.order[self._cursor])

    def _diffusion_round(self, key: str):
        sub = diffuse(self.store, [self._next_seed()], self.m)
        self._append(sub)
        self.trace[key] += 1

    def step_split(self):
        deg = self.store.degree
        for v in np.flatnonzero(deg > SPLIT_FRACTION * self.m):
            for sub in split_neighbors(self.store, int(v), SPLIT_FRACTION * self.m):
                self._append(sub)
                self.trace["split_neighbors"] += 1

    def step_diffusion(self):
        while self.n_unassigned > 0 and self.n_unassigned > (1 - self.h) * self.n_outer:
            self._diffusion_round("step2_diffusions")

    def dilate(self):
        before = int(self.unassigned.sum())
        self.subgraphs, self.frontiers = dilate(self.store, self.subgraphs, self.unassigned, self.frontiers)
        self.n_unassigned -= before - int(self.unassigned.sum())

    def step_dilation(self):
        rounds = 0
        while self.n_unassigned > 0:
            if rounds > 0 and rounds % DIFFUSION_EVERY == 0:
                for _ in range(DIFFUSION_BURST):
                    if self.n_unassigned == 0:
                        break
                    self._diffusion_round("step4_diffusions")
            self.dilate()
            rounds += 1
        self.trace["dilation_rounds"] = rounds

    def merge(self, min_size: float, max_size: float | None, key: str):
        self.subgraphs = merge_small_subgraphs(self.subgraphs, min_size, max_size)
        self.frontiers = list(self.subgraphs)
        self.trace[key] = len(self.subgraphs)


def merge_small_subgraphs(subgraphs, min_size: float, max_size: float | None = None) -> list:
    """Merge each subgraph smaller than ``min_size`` into an overlapping one.

    The partner is the overlapping subgraph sharing the most entities (ties:
    lowest index); with ``max_size`` set, only partners whose union stays
    within it qualify. Passes repeat until no merge happens. Without
    ``max_size`` this is the systematic variant.
    """
    sets = [set(s.tolist()) for s in subgraphs]
    alive = [True] * len(sets)
    members = defaultdict(set)
    for i, s in enumerate(sets):
        for u in s:
            members[u].add(i)
    changed = True
    while changed:
        changed = False
        for i in range(len(sets)):
            if not alive[i] or len(sets[i]) >= min_size:
                continue
            overlap = Counter(j for u in sets[i] for j in members[u] if j != i)
            best = None
            for j, shared in overlap.items():
                if max_size is not None and len(sets[i]) + len(sets[j]) - shared > max_size:
                    continue
                if best is None or (shared, -j) > (best[1], -best[0]):
                    best = (j, shared)
            if best is None:
                continue
            lo, hi = min(i, best[0]), max(i, best[0])
            for u in sets[hi]:
                members[u].discard(hi)
                members[u].add(lo)
            sets[lo] |= sets[hi]
            sets[hi] = set()
            alive[hi] = False
            changed = True
    return [np.array(sorted(s), dtype=np.int64) for s, a in zip(sets, alive) if a]


def _components(adjacency, nodes: np.ndarray) -> list:
    """Connected components of the subgraph induced on ``nodes`` (sorted)."""
    sub = adjacency[nodes][:, nodes]
    n_comp, labels = csgraph.connected_components(sub, directed=False)
    return [nodes[labels == c] for c in range(n_comp)]


def split_component(store: TripleStore, comp: np.ndarray, core_mask, max_size: int) -> list:
    """Cut one oversized core-free component into overlapping chunks.

    A BFS restricted to ``comp`` starts from its entities adjacent to the
    core (or from its smallest id when none is). Entities are taken in BFS
    order and each brings along its BFS-tree path back to a source, so every
    chunk stays connected once merged with the core.
    """
    adj = store.adjacency
    inside = np.zeros(store.n_entities, dtype=bool)
    inside[comp] = True
    sources = [int(u) for u in comp if core_mask[store.neighbors(u)].any()] or [int(comp[0])]
    parent = {u: -1 for u in sources}
    order = list(sources)
    for u in order:
        for v in adj.indices[adj.indptr[u] : adj.indptr[u + 1]].tolist():
            if inside[v] and v not in parent:
                parent[v] = u
                order.append(v)

    chunks, current = [], set()
    for v in order:
        if v in current:
            continue
        chain = _root_chain(v, parent, current)
        if current and len(current) + len(chain) > max_size:
            chunks.append(current)
            current = set()
            chain = _root_chain(v, parent, current)
        current.update(chain)
    if current:
        chunks.append(current)
    return [np.array(sorted(c), dtype=np.int64) for c in chunks]


def _root_chain(v, parent, stop):
    chain = [v]
    while parent[chain[-1]] != -1 and parent[chain[-1]] not in stop:
        chain.append(parent[chain[-1]])
    return chain


def split_large_subgraphs(store: TripleStore, subgraphs, core_mask, max_size: int) -> list:
    """Replace each subgraph above ``max_size`` by bins of its core-free components.

    Components are packed first-fit in descending size (ties: smallest id).
    A component that alone exceeds ``max_size`` is cut by ``split_component``.
    """
    out = []
    for sub in subgraphs:
        if len(sub) <= max_size:
            out.append(sub)
            continue
        outer = sub[~core_mask[sub]]
        comps = sorted(_components(store.adjacency, outer), key=lambda c: (-len(c), c[0]))
        bins: list[list] = []
        sizes: list[int] = []
        for comp in comps:
            if len(comp) > max_size:
                logger.info("cutting a core-free component of %d entities", len(comp))
                out.extend(split_component(store, comp, core_mask, max_size))
                continue
            for b in range(len(bins)):
                if sizes[b] + len(comp) <= max_size:
                    bins[b].append(comp)
                    sizes[b] += len(comp)
                    break
            else:
                bins.append([comp])
                sizes.append(len(comp))
        out.extend(np.sort(np.concatenate(b)) for b in bins)
    return out


def is_core_connected(store: TripleStore, sub: np.ndarray, core_mask: np.ndarray) -> bool:
    nodes = np.union1d(sub, np.flatnonzero(core_mask))
    if len(nodes) == 0:
        return True
    n_comp, _ = csgraph.connected_components(store.adjacency[nodes][:, nodes], directed=False)
    return n_comp == 1


def attach_to_core(store: TripleStore, subgraphs, core_mask, max_size: int) -> tuple:
    """Add shortest paths joining core-detached pieces of each subgraph to the core.

    A subgraph is only extended when the result stays within ``max_size``;
    otherwise it is left as is (it stays connected on its own). Returns the
    new list and the number of subgraphs extended.
    """
    if not core_mask.any():
        return list(subgraphs), 0
    core_ids = np.flatnonzero(core_mask)
    out, attached = [], 0
    for sub in subgraphs:
        nodes = np.union1d(sub, core_ids)
        detached = [c for c in _components(store.adjacency, nodes) if not core_mask[c].any()]
        if not detached:
            out.append(sub)
            continue
        extra = []
        for comp in detached:
            path = bfs_path(store.adjacency, comp.tolist(), core_mask)
            if path is not None:
                extra.extend(u for u in path if not core_mask[u])
        grown = np.union1d(sub, np.asarray(extra, dtype=np.int64))
        if len(grown) <= max_size:
            out.append(grown)
            attached += 1
        else:
            out.append(sub)
    return out, attached


def partition(store: TripleStore, core: CoreSubgraph, h: float = 0.6, m: int = 2000, seed=0) -> Partition:
    """Cover every non-core entity with overlapping subgraphs of at most ``m`` entities.

    Steps: split super-spreader neighbourhoods; diffuse from the
    highest-degree unassigned entities until a fraction ``h`` of the outer
    entities is assigned; merge small subgraphs; alternate dilation with
    bursts of diffusion until everything is assigned; merge systematically;
    split oversized subgraphs; merge small ones again.

    ``seed`` is accepted for interface stability; every tie is broken by id
    so the result does not depend on it.
    """
    if not 0 < h < 1:
        raise ValueError(f"h must lie in (0, 1), got {h}")
    if m < 2:
        raise ValueError(f"m must be at least 2, got {m}")
    core_ids = np.asarray(core.entities, dtype=np.int64)
    if len(core_ids) and (core_ids.min() < 0 or core_ids.max() >= store.n_entities):
        raise CoreNotInStore("core entity ids fall outside the store")
    core_mask = store.entity_mask(core_ids)

    b = _Blocs(store, core_mask, h, m)
    b.step_split()
    b.step_diffusion()
    b.merge(m / 2, m, "after_step3")
    b.step_dilation()
    b.merge(0.4 * m, None, "after_step5")
    subs, attached = attach_to_core(store, b.subgraphs, core_mask, m)
    b.trace["attached_to_core"] = attached
    subs = split_large_subgraphs(store, subs, core_mask, m)
    subs = merge_small_subgraphs(subs, m / 2, m)
    return Partition(subs, store.n_entities, np.sort(core_ids), h, m, dict(b.trace))


def partition_stats(part: Partition, store: TripleStore | None = None) -> dict:
    """Replication factor, size histogram, coverage and (with ``store``) the
    fraction of subgraphs connected once merged with the core."""
    counts = part.assignment_counts
    outer = ~part.core_mask
    assigned = outer & (counts > 0)
    n_assigned = int(assigned.sum())
    sizes = np.array([len(s) for s in part.subgraphs], dtype=np.int64)
    n_outer = int(outer.sum())
    stats = {
        "replication_factor": float(counts[assigned].sum() / n_assigned) if n_assigned else math.nan,
        "sizes": dict(sorted(Counter(sizes.tolist()).items())),
        "max_size": int(sizes.max()) if len(sizes) else 0,
        "n_subgraphs": len(part.subgraphs),
        "coverage": n_assigned / n_outer if n_outer else 1.0,
    }
    if store is not None:
        ok = sum(is_core_connected(store, s, part.core_mask) for s in part.subgraphs)
        stats["connected_fraction"] = ok / len(part.subgraphs) if part.subgraphs else 1.0
    return stats
