"""Relation-aware propagation of frozen core embeddings to the outer graph.

Each step is synchronous: every non-frozen entity ``u`` gathers

    a_u = sum over triples (v, r, u) of phi(theta_v, w_r)

from the current state, then moves to ``(theta_u + alpha * a_u)`` rescaled
to unit norm. Messages whose source row is still zero are dropped, so
unreached entities never inject the bare relation vector (which TransE
would otherwise do). Work happens in float64 on a local copy of the rows
of one subgraph plus the core, and results are written back as float32.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.sparse import csr_array

from .core import CoreSubgraph
from .embeddings import EmbeddingMatrix
from .errors import ConfigError, OperatorUnsupported
from .graph import TripleStore
from .operators import DISTMULT, check_operator, phi

logger = logging.getLogger(__name__)


@dataclass
class PropagationConfig:
    T: int = 5
    alpha: float = 1.0
    operator: str = DISTMULT

    def validate(self) -> PropagationConfig:
        self.operator = check_operator(self.operator)
        if int(self.T) != self.T or self.T < 1:
            raise ConfigError("T", "number of propagation steps must be a positive integer")
        if not self.alpha > 0:
            raise ConfigError("alpha", "must be positive")
        return self


@dataclass
class PropagationReport:
    T: int
    alpha: float
    zero_rows_remaining: int
    subgraphs_processed: int
    peak_resident_rows: int

    def to_dict(self) -> dict:
        return asdict(self)


def default_steps(mspl: float, factor: float = 2.5) -> int:
    """Step count proportional to the mean shortest path length."""
    return max(1, math.ceil(factor * mspl))


def init_embeddings(n_total: int, core_emb, core_ids) -> EmbeddingMatrix:
    """Global matrix with the core rows copied in and frozen, every other row zero."""
    core_values = core_emb.values if isinstance(core_emb, EmbeddingMatrix) else np.asarray(core_emb)
    core_ids = np.asarray(core_ids, dtype=np.int64)
    if len(core_ids) != len(core_values):
        raise ValueError("core ids and core embedding rows differ in length")
    values = np.zeros((n_total, core_values.shape[1]), dtype=np.float32)
    values[core_ids] = core_values
    frozen = np.zeros(n_total, dtype=bool)
    frozen[core_ids] = True
    return EmbeddingMatrix(values, frozen)


def _incidence(tails_local: np.ndarray, n_local: int) -> csr_array:
    # row u sums the messages of its incoming triples, in triple order
    n = len(tails_local)
    return csr_array((np.ones(n), (tails_local, np.arange(n))), shape=(n_local, n))


def _propagate_block(op, x, frozen, heads, rels, tails, rel_values, T, alpha):
    """Run ``T`` Jacobi steps in place on the local float64 block ``x``."""
    keep = ~frozen[tails]
    heads, rels, tails = heads[keep], rels[keep], tails[keep]
    scatter = _incidence(tails, len(x))
    w = rel_values[rels]
    update = ~frozen
    for _ in range(T):
        active = x.any(axis=1)
        msg = phi(op, x[heads], w)
        msg *= active[heads][:, None]
        a = scatter @ msg
        new = x[update] + alpha * a[update]
        norms = np.linalg.norm(new, axis=1, keepdims=True)
        x[update] = np.divide(new, norms, out=np.zeros_like(new), where=norms > 0)
    return x


def propagate_subgraph(
    store: TripleStore,
    sub,
    core: CoreSubgraph | np.ndarray,
    emb: EmbeddingMatrix,
    rel_emb: EmbeddingMatrix,
    cfg: PropagationConfig,
) -> EmbeddingMatrix:
    """Propagate inside ``sub`` merged with the core, writing into ``emb`` in place.

    ``store`` should carry inverse relations so information also flows
    against triple direction. Returns ``emb``.
    """
    _run_subgraph(store, sub, _core_mask(core, store.n_entities), emb, rel_emb, cfg.validate())
    return emb


def _core_mask(core, n: int) -> np.ndarray:
    if isinstance(core, CoreSubgraph):
        return core.mask(n)
    core = np.asarray(core)
    if core.dtype == bool:
        return core
    mask = np.zeros(n, dtype=bool)
    mask[core] = True
    return mask


def _run_subgraph(store, sub, core_mask, emb, rel_emb, cfg) -> int:
    mask = core_mask.copy()
    mask[np.asarray(sub, dtype=np.int64)] = True
    ids = np.flatnonzero(mask)
    local = np.full(store.n_entities, -1, dtype=np.int64)
    local[ids] = np.arange(len(ids))
    tidx = store.induced_triples(mask)
    rel_values = np.asarray(rel_emb.values if isinstance(rel_emb, EmbeddingMatrix) else rel_emb, dtype=np.float64)
    frozen = emb.frozen[ids]
    x = emb.values[ids].astype(np.float64)
    _propagate_block(
        cfg.operator,
        x,
        frozen,
        local[store.heads[tidx]],
        store.relations[tidx],
        local[store.tails[tidx]],
        rel_values,
        int(cfg.T),
        float(cfg.alpha),
    )
    emb.values[ids[~frozen]] = x[~frozen]
    return len(ids) + len(rel_values)


def propagate_all(
    store: TripleStore,
    partition,
    core,
    emb: EmbeddingMatrix,
    rel_emb: EmbeddingMatrix,
    cfg: PropagationConfig,
) -> tuple[EmbeddingMatrix, PropagationReport]:
    """One pass over the subgraphs in order, each reading the current global state."""
    cfg.validate()
    subgraphs = partition.subgraphs if hasattr(partition, "subgraphs") else list(partition)
    core_mask = _core_mask(core, store.n_entities)
    peak = 0
    for i, sub in enumerate(subgraphs):
        peak = max(peak, _run_subgraph(store, sub, core_mask, emb, rel_emb, cfg))
        logger.debug("subgraph %d/%d done", i + 1, len(subgraphs))
    zeros = int(emb.zero_mask.sum())
    if zeros:
        logger.warning("%d entities still have zero embeddings after propagation", zeros)
    report = PropagationReport(int(cfg.T), float(cfg.alpha), zeros, len(subgraphs), peak)
    return emb, report


def propagate_whole_graph(store, core, emb, rel_emb, cfg) -> EmbeddingMatrix:
    """Propagation over all entities at once, without any partition."""
    return propagate_subgraph(store, np.arange(store.n_entities), core, emb, rel_emb, cfg)


def alignment_energy(triples, emb, rel_emb, op: str = DISTMULT) -> float:
    """``-sum <theta_t, theta_h * w_r>`` over ``triples`` (DistMult only)."""
    if check_operator(op) != DISTMULT:
        raise OperatorUnsupported("alignment energy is defined for DistMult only")
    e = np.asarray(emb.values if isinstance(emb, EmbeddingMatrix) else emb, dtype=np.float64)
    w = np.asarray(rel_emb.values if isinstance(rel_emb, EmbeddingMatrix) else rel_emb, dtype=np.float64)
    t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if len(t) == 0:
        return 0.0
    return -float(np.sum(e[t[:, 0]] * w[t[:, 1]] * e[t[:, 2]]))


def energy_gradient(triples, emb: np.ndarray, rel: np.ndarray) -> np.ndarray:
    """Full gradient of the DistMult alignment energy (head and tail slots)."""
    t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    grad = np.zeros_like(emb, dtype=np.float64)
    np.add.at(grad, t[:, 2], -(emb[t[:, 0]] * rel[t[:, 1]]))
    np.add.at(grad, t[:, 0], -(emb[t[:, 2]] * rel[t[:, 1]]))
    return grad


@dataclass
class EquivalenceCheck:
    max_deviation: float
    fd_relative_error: float


def gradient_equivalence_check(
    store: TripleStore,
    emb,
    rel_emb,
    core,
    alpha: float,
    fd_step: float = 1e-4,
    max_fd_entities: int | None = None,
) -> EquivalenceCheck:
    """Compare one pre-normalisation propagation update with a gradient step.

    For every outer entity ``u`` the update ``theta_u + alpha * a_u`` is
    compared with ``theta_u - alpha * g_u`` where ``g_u`` collects the
    energy terms in which ``u`` is the tail; the head-slot terms are the
    inverse-relation triples, whose tail is the other endpoint. The full
    energy gradient is checked separately against central differences.
    All arithmetic is float64; the DistMult operator is assumed.
    """
    e = np.array(emb.values if isinstance(emb, EmbeddingMatrix) else emb, dtype=np.float64)
    w = np.asarray(rel_emb.values if isinstance(rel_emb, EmbeddingMatrix) else rel_emb, dtype=np.float64)
    core_mask = _core_mask(core, store.n_entities)
    triples = store.triples
    outer = np.flatnonzero(~core_mask)

    # propagation message, skipping zero-row sources
    active = e.any(axis=1)
    msg = e[triples[:, 0]] * w[triples[:, 1]] * active[triples[:, 0]][:, None]
    a = np.zeros_like(e)
    np.add.at(a, triples[:, 2], msg)
    update = e[outer] + alpha * a[outer]

    tail_grad = np.zeros_like(e)
    np.add.at(tail_grad, triples[:, 2], -(e[triples[:, 0]] * w[triples[:, 1]]))
    step = e[outer] - alpha * tail_grad[outer]
    deviation = float(np.max(np.abs(update - step))) if len(outer) else 0.0

    grad = energy_gradient(triples, e, w)
    check = outer if max_fd_entities is None else outer[:max_fd_entities]
    numeric = np.zeros((len(check), e.shape[1]))
    for i, u in enumerate(check):
        for j in range(e.shape[1]):
            orig = e[u, j]
            e[u, j] = orig + fd_step
            plus = alignment_energy(triples, e, w)
            e[u, j] = orig - fd_step
            minus = alignment_energy(triples, e, w)
            e[u, j] = orig
            numeric[i, j] = (plus - minus) / (2 * fd_step)
    analytic = grad[check]
    denom = max(float(np.linalg.norm(analytic)), 1e-300)
    rel_err = float(np.linalg.norm(numeric - analytic)) / denom if len(check) else 0.0
    return EquivalenceCheck(deviation, rel_err)
