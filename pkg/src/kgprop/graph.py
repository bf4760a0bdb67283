"""Triple storage: ingestion, interning, incidence indexes and graph statistics."""

from __future__ import annotations

import math
from collections import deque
import struct
import zlib
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import csgraph, csr_array

from .errors import (
    AlreadyAugmented,
    ChecksumMismatch,
    EmptyGraph,
    MalformedRecord,
    UnknownFormat,
)

INVERSE_SUFFIX = "__inverse"
STORE_MAGIC = b"SPKG"
STORE_VERSION = 1
EXACT_STATS_MAX_ENTITIES = 10_000


class TripleStore:
    """Immutable multi-relational graph with interned entity and relation ids.

    Triples are held as three parallel ``int64`` arrays. Two CSR-style
    incidence indexes list, for each entity, the triples in which it is the
    head (``out``) or the tail (``in``). An undirected neighbour CSR without
    self-loops or duplicate neighbours backs every traversal.

    Parameters
    ----------
    heads, relations, tails : array-like of int
        Triple columns; must already be deduplicated.
    entity_labels, relation_labels : sequence of str
        Label tables; id ``i`` is ``labels[i]``.
    n_base_relations : int, optional
        Number of original relations when the store is augmented with
        inverses (relation ``k + n_base_relations`` inverts ``k``).
    """

    def __init__(
        self,
        heads,
        relations,
        tails,
        entity_labels,
        relation_labels,
        n_base_relations=None,
        augmented=False,
    ):
        self.heads = _frozen(np.asarray(heads, dtype=np.int64))
        self.relations = _frozen(np.asarray(relations, dtype=np.int64))
        self.tails = _frozen(np.asarray(tails, dtype=np.int64))
        if not (len(self.heads) == len(self.relations) == len(self.tails)):
            raise ValueError("triple columns must have equal length")
        self.entity_labels = tuple(entity_labels)
        self.relation_labels = tuple(relation_labels)
        self.augmented = bool(augmented)
        self.n_base_relations = (
            len(self.relation_labels) if n_base_relations is None else int(n_base_relations)
        )
        if len(self.heads):
            if max(self.heads.max(), self.tails.max()) >= self.n_entities:
                raise ValueError("entity id out of range")
            if self.relations.max() >= self.n_relations:
                raise ValueError("relation id out of range")

    def __repr__(self):
        return (
            f"TripleStore(n_entities={self.n_entities}, n_relations={self.n_relations}, "
            f"n_triples={self.n_triples}, augmented={self.augmented})"
        )

    def __eq__(self, other):
        if not isinstance(other, TripleStore):
            return NotImplemented
        return (
            self.entity_labels == other.entity_labels
            and self.relation_labels == other.relation_labels
            and self.augmented == other.augmented
            and self.n_base_relations == other.n_base_relations
            and np.array_equal(self.heads, other.heads)
            and np.array_equal(self.relations, other.relations)
            and np.array_equal(self.tails, other.tails)
        )

    @property
    def n_entities(self) -> int:
        return len(self.entity_labels)

    @property
    def n_relations(self) -> int:
        return len(self.relation_labels)

    @property
    def n_triples(self) -> int:
        return len(self.heads)

    @property
    def triples(self) -> np.ndarray:
        """``(n_triples, 3)`` array of ``(head, relation, tail)``."""
        return np.stack([self.heads, self.relations, self.tails], axis=1)

    @cached_property
    def entity_index(self) -> dict:
        return {label: i for i, label in enumerate(self.entity_labels)}

    @cached_property
    def relation_index(self) -> dict:
        return {label: i for i, label in enumerate(self.relation_labels)}

    @cached_property
    def degree(self) -> np.ndarray:
        """Endpoint count per entity; a self-loop counts twice."""
        deg = np.bincount(self.heads, minlength=self.n_entities)
        deg += np.bincount(self.tails, minlength=self.n_entities)
        return _frozen(deg.astype(np.int64))

    @cached_property
    def _out_index(self):
        return _group_by(self.heads, self.n_entities)

    @cached_property
    def _in_index(self):
        return _group_by(self.tails, self.n_entities)

    def out_triples(self, u: int) -> np.ndarray:
        """Indices of triples whose head is ``u``, ascending."""
        indptr, order = self._out_index
        return order[indptr[u] : indptr[u + 1]]

    def in_triples(self, u: int) -> np.ndarray:
        """Indices of triples whose tail is ``u``, ascending."""
        indptr, order = self._in_index
        return order[indptr[u] : indptr[u + 1]]

    @cached_property
    def adjacency(self) -> csr_array:
        """Symmetric 0/1 neighbour matrix, no self-loops, sorted indices."""
        n = self.n_entities
        keep = self.heads != self.tails
        rows = np.concatenate([self.heads[keep], self.tails[keep]])
        cols = np.concatenate([self.tails[keep], self.heads[keep]])
        adj = csr_array((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
        adj.sum_duplicates()
        adj.data[:] = 1
        adj.sort_indices()
        return adj

    def neighbors(self, u: int) -> np.ndarray:
        adj = self.adjacency
        return adj.indices[adj.indptr[u] : adj.indptr[u + 1]]

    def entity_mask(self, entities) -> np.ndarray:
        mask = np.zeros(self.n_entities, dtype=bool)
        mask[np.asarray(entities, dtype=np.int64)] = True
        return mask

    def induced_triples(self, entities) -> np.ndarray:
        """Indices of triples with both endpoints in ``entities`` (ids or mask)."""
        mask = np.asarray(entities)
        if mask.dtype != bool:
            mask = self.entity_mask(mask)
        return np.flatnonzero(mask[self.heads] & mask[self.tails])

    def subset(self, triple_indices) -> TripleStore:
        """Store over the same entity/relation tables with a subset of triples."""
        idx = np.asarray(triple_indices, dtype=np.int64)
        return TripleStore(
            self.heads[idx],
            self.relations[idx],
            self.tails[idx],
            self.entity_labels,
            self.relation_labels,
            n_base_relations=self.n_base_relations,
            augmented=self.augmented,
        )


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _group_by(keys: np.ndarray, n: int):
    order = np.argsort(keys, kind="stable")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(keys, minlength=n), out=indptr[1:])
    return _frozen(indptr), _frozen(order)


def parse_triples(lines, sep: str = "\t") -> TripleStore:
    """Build a store from an iterable of text lines.

    Entities and relations are interned in first-seen order; exact duplicate
    triples are dropped. Blank lines and lines starting with ``#`` are ignored.
    """
    ent_ids: dict[str, int] = {}
    rel_ids: dict[str, int] = {}
    seen: set[tuple[int, int, int]] = set()
    heads, rels, tails = [], [], []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split(sep)
        if len(fields) != 3 or any(not f.strip() for f in fields):
            raise MalformedRecord(lineno, line)
        h = ent_ids.setdefault(fields[0], len(ent_ids))
        r = rel_ids.setdefault(fields[1], len(rel_ids))
        t = ent_ids.setdefault(fields[2], len(ent_ids))
        key = (h, r, t)
        if key in seen:
            continue
        seen.add(key)
        heads.append(h)
        rels.append(r)
        tails.append(t)
    if not heads:
        raise EmptyGraph("no valid triples")
    return TripleStore(heads, rels, tails, list(ent_ids), list(rel_ids))


def ingest_triples(path, sep: str = "\t") -> TripleStore:
    """Read a ``head<sep>relation<sep>tail`` text file (UTF-8)."""
    with open(path, encoding="utf-8") as f:
        return parse_triples(f, sep=sep)


def write_triples(store: TripleStore, path, triple_indices=None, sep: str = "\t"):
    idx = range(store.n_triples) if triple_indices is None else triple_indices
    ent, rel = store.entity_labels, store.relation_labels
    with open(path, "w", encoding="utf-8") as f:
        for i in idx:
            f.write(f"{ent[store.heads[i]]}{sep}{rel[store.relations[i]]}{sep}{ent[store.tails[i]]}\n")


def connected_components(store: TripleStore) -> tuple[int, np.ndarray]:
    """Undirected weakly-connected component labels."""
    return csgraph.connected_components(store.adjacency, directed=False)


def largest_component_mask(adjacency, within=None) -> np.ndarray:
    """Mask of the largest component; ties go to the one with the smallest id.

    With ``within``, only components of the nodes in that mask compete (the
    adjacency is then expected to be induced on it).
    """
    _, labels = csgraph.connected_components(adjacency, directed=False)
    if within is not None:
        labels = np.where(within, labels, -1)
    comps, first, sizes = np.unique(labels[labels >= 0], return_index=True, return_counts=True)
    # np.unique sorts labels, so restrict to the largest and pick the earliest-seen
    cand = np.flatnonzero(sizes == sizes.max())
    positions = np.flatnonzero(labels >= 0)[first[cand]]
    return labels == comps[cand[np.argmin(positions)]]


def bfs_path(adjacency, starts, target: np.ndarray):
    """Shortest undirected path from any of ``starts`` to an entity in ``target``.

    Neighbours are expanded in ascending id order, so the first path found
    among equal-length ones is deterministic. Returns ``None`` if unreachable.
    """
    indptr, indices = adjacency.indptr, adjacency.indices
    parent = {int(s): -1 for s in starts}
    queue = deque(parent)
    while queue:
        u = queue.popleft()
        if target[u]:
            path = [u]
            while parent[path[-1]] != -1:
                path.append(parent[path[-1]])
            return path[::-1]
        for v in indices[indptr[u] : indptr[u + 1]].tolist():
            if v not in parent:
                parent[v] = u
                queue.append(v)
    return None


def restrict_to_entities(store: TripleStore, mask: np.ndarray) -> TripleStore:
    """Induced sub-store over ``mask``, with entity ids re-interned in id order."""
    keep = np.flatnonzero(mask)
    new_id = np.full(store.n_entities, -1, dtype=np.int64)
    new_id[keep] = np.arange(len(keep))
    tidx = store.induced_triples(mask)
    return TripleStore(
        new_id[store.heads[tidx]],
        store.relations[tidx],
        new_id[store.tails[tidx]],
        [store.entity_labels[i] for i in keep],
        store.relation_labels,
        n_base_relations=store.n_base_relations,
        augmented=store.augmented,
    )


def largest_connected_component(store: TripleStore) -> TripleStore:
    """Restrict ``store`` to its largest undirected connected component."""
    if store.n_triples == 0:
        raise EmptyGraph("store has no triples")
    mask = largest_component_mask(store.adjacency)
    if mask.all():
        return store
    return restrict_to_entities(store, mask)


def add_inverse_relations(store: TripleStore) -> TripleStore:
    """Append ``(t, inv(r), h)`` for every triple; ``inv(k) = k + |R|``."""
    if store.augmented:
        raise AlreadyAugmented("store already contains inverse relations")
    n_rel = store.n_relations
    labels = list(store.relation_labels) + [l + INVERSE_SUFFIX for l in store.relation_labels]
    return TripleStore(
        np.concatenate([store.heads, store.tails]),
        np.concatenate([store.relations, store.relations + n_rel]),
        np.concatenate([store.tails, store.heads]),
        store.entity_labels,
        labels,
        n_base_relations=n_rel,
        augmented=True,
    )


def drop_inverse_relations(store: TripleStore) -> TripleStore:
    if not store.augmented:
        return store
    keep = store.relations < store.n_base_relations
    return TripleStore(
        store.heads[keep],
        store.relations[keep],
        store.tails[keep],
        store.entity_labels,
        store.relation_labels[: store.n_base_relations],
    )


@dataclass(frozen=True)
class GraphStats:
    n_entities: int
    n_relations: int
    n_triples: int
    max_degree: int
    avg_degree: float
    density: float
    lcc_fraction: float
    approx_mspl: float | None = None
    approx_diameter: int | None = None
    approximate: bool = True

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def graph_stats(store: TripleStore, mspl_samples: int = 64, seed=0, exact: bool = False) -> GraphStats:
    """Degree, density and connectivity statistics.

    Mean shortest path length and diameter are computed on the largest
    component from BFS trees rooted at ``mspl_samples`` uniformly drawn
    entities (the diameter is then a lower bound). ``exact=True`` roots a BFS
    at every entity and is limited to graphs of at most 10,000 entities.
    """
    if store.n_triples == 0:
        raise EmptyGraph("store has no triples")
    n = store.n_entities
    deg = store.degree
    lcc = largest_component_mask(store.adjacency)
    mspl = diameter = None
    if exact:
        if n > EXACT_STATS_MAX_ENTITIES:
            raise ValueError(f"exact statistics limited to {EXACT_STATS_MAX_ENTITIES} entities")
        roots = np.flatnonzero(lcc)
    elif mspl_samples:
        rng = np.random.default_rng(seed)
        pool = np.flatnonzero(lcc)
        roots = np.sort(rng.choice(pool, size=min(mspl_samples, len(pool)), replace=False))
    else:
        roots = np.empty(0, dtype=np.int64)
    if len(roots):
        mspl, diameter = _bfs_path_stats(store.adjacency, roots)
    return GraphStats(
        n_entities=n,
        n_relations=store.n_relations,
        n_triples=store.n_triples,
        max_degree=int(deg.max()),
        avg_degree=float(deg.mean()),
        density=store.n_triples / (n * (n - 1)) if n > 1 else math.inf,
        lcc_fraction=float(lcc.sum()) / n,
        approx_mspl=mspl,
        approx_diameter=diameter,
        approximate=not exact,
    )


def _bfs_path_stats(adjacency, roots, chunk: int = 16):
    total, count, diameter = 0.0, 0, 0
    for start in range(0, len(roots), chunk):
        dist = csgraph.shortest_path(
            adjacency, directed=False, unweighted=True, indices=roots[start : start + chunk]
        )
        finite = dist[np.isfinite(dist) & (dist > 0)]
        total += float(finite.sum())
        count += finite.size
        if finite.size:
            diameter = max(diameter, int(finite.max()))
    return (total / count if count else 0.0), diameter


# Binary cache: magic, u16 version, u16 flags, u64 counts, LE int64 columns,
# length-prefixed newline-joined label tables, trailing CRC32.
_STORE_HEADER = struct.Struct("<4sHHQQQQ")


def save_store(store: TripleStore, path) -> None:
    ent = "\n".join(store.entity_labels).encode("utf-8")
    rel = "\n".join(store.relation_labels).encode("utf-8")
    parts = [
        _STORE_HEADER.pack(
            STORE_MAGIC,
            STORE_VERSION,
            int(store.augmented),
            store.n_entities,
            store.n_relations,
            store.n_base_relations,
            store.n_triples,
        ),
        store.heads.astype("<i8").tobytes(),
        store.relations.astype("<i8").tobytes(),
        store.tails.astype("<i8").tobytes(),
        struct.pack("<Q", len(ent)),
        ent,
        struct.pack("<Q", len(rel)),
        rel,
    ]
    body = b"".join(parts)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def load_store(path) -> TripleStore:
    data = Path(path).read_bytes()
    if data[:4] != STORE_MAGIC:
        raise UnknownFormat(f"{path}: not a triple-store cache")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumMismatch(f"{path}: checksum mismatch")
    _, version, flags, n_ent, n_rel, n_base, n_trip = _STORE_HEADER.unpack_from(body)
    if version != STORE_VERSION:
        raise UnknownFormat(f"{path}: unsupported version {version}")
    off = _STORE_HEADER.size
    cols = []
    for _ in range(3):
        cols.append(np.frombuffer(body, dtype="<i8", count=n_trip, offset=off).astype(np.int64))
        off += 8 * n_trip
    labels = []
    for _ in range(2):
        (length,) = struct.unpack_from("<Q", body, off)
        off += 8
        text = body[off : off + length].decode("utf-8")
        off += length
        labels.append(text.split("\n") if text else [])
    store = TripleStore(*cols, labels[0], labels[1], n_base_relations=n_base, augmented=bool(flags & 1))
    if store.n_entities != n_ent or store.n_relations != n_rel:
        raise ChecksumMismatch(f"{path}: label table size mismatch")
    return store
