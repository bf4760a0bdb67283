"""Contrastive training of core entity and relation embeddings.

Loss per positive triple: ``-log σ(f(pos)) - Σ_j log σ(-f(neg_j))`` over
``p`` uniform corruptions, averaged over the mini-batch and minimised with
Adam. Entity rows are projected back on the unit sphere after every step;
RotatE relation pairs are projected back to unit modulus.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_array

from .core import CoreSubgraph
from .embeddings import EmbeddingMatrix
from .errors import ConfigError, Diverged
from .graph import TripleStore
from .operators import ROTATE, check_dim, check_operator, project_unit_modulus, score_grads

logger = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    d: int = 100
    n_epoch: int = 25
    batch_size: int = 512
    negatives: int = 100
    lr: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0

    def validate(self, operator: str = "distmult") -> TrainConfig:
        check_dim(operator, self.d)
        if self.n_epoch < 0:
            raise ConfigError("n_epoch", "must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size", "must be at least 1")
        if self.negatives < 1:
            raise ConfigError("negatives", "must be at least 1")
        if not self.lr > 0:
            raise ConfigError("lr", "must be positive")
        if self.optimizer != "adam":
            raise ConfigError("optimizer", "only 'adam' is supported")
        return self


@dataclass
class TrainResult:
    """Trained embeddings; entity row ``i`` belongs to store entity ``entity_ids[i]``."""

    entity_ids: np.ndarray
    entities: EmbeddingMatrix
    relations: EmbeddingMatrix
    losses: list = field(default_factory=list)


def normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x.astype(np.float64), axis=1, keepdims=True)
    return (x / np.where(norms > 0, norms, 1)).astype(x.dtype)


def init_embeddings(operator: str, n_entities: int, n_relations: int, d: int, rng):
    """Uniform rows scaled by ``1/sqrt(d)``; entities unit-normalised,
    RotatE relations drawn as unit-modulus phases."""
    operator = check_operator(operator)
    bound = 1.0 / np.sqrt(d)
    ent = rng.uniform(-bound, bound, size=(n_entities, d)).astype(np.float32)
    ent = normalize_rows(ent)
    if operator == ROTATE:
        phase = rng.uniform(-np.pi, np.pi, size=(n_relations, d // 2))
        rel = np.empty((n_relations, d), dtype=np.float32)
        rel[:, 0::2] = np.cos(phase)
        rel[:, 1::2] = np.sin(phase)
    else:
        rel = rng.uniform(-bound, bound, size=(n_relations, d)).astype(np.float32)
    return ent, rel


def sample_negatives(batch: np.ndarray, p: int, n_entities: int, rng) -> np.ndarray:
    """``p`` corruptions per positive, rows grouped by positive.

    Corruption ``j`` replaces the tail when ``j`` is even and the head when
    odd, with an entity drawn uniformly among the ``n_entities - 1`` others.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    batch = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    neg = np.repeat(batch, p, axis=0)
    slot = np.where(np.arange(len(neg)) % p % 2 == 0, 2, 0)
    rows = np.arange(len(neg))
    current = neg[rows, slot]
    draw = rng.integers(0, max(n_entities - 1, 1), size=len(neg))
    if n_entities > 1:
        draw = draw + (draw >= current)
    neg[rows, slot] = draw
    return neg


def triple_loss_grads(operator: str, head, rel, tail, label):
    """Logistic loss ``softplus(-label * f)`` and its gradients, per row."""
    f, gh, gr, gt = score_grads(operator, head, rel, tail)
    label = np.asarray(label, dtype=np.float64)
    loss = np.logaddexp(0.0, -label * f)
    dloss = (-label / (1.0 + np.exp(label * f)))[..., None].astype(np.result_type(gh), copy=False)
    return loss, dloss * gh, dloss * gr, dloss * gt


def scatter_rows(index: np.ndarray, values: np.ndarray, n_rows: int) -> np.ndarray:
    """Sum ``values`` rows into ``n_rows`` buckets given by ``index`` (float64)."""
    n = len(index)
    ones = np.ones(n, dtype=np.float64)
    return csr_array((ones, (index, np.arange(n))), shape=(n_rows, n)) @ values.astype(np.float64)


def batch_loss_grads(operator, ent, rel, pos, neg):
    """Mean batch loss and dense gradients for ``ent`` and ``rel``."""
    b = len(pos)
    triples = np.concatenate([pos, neg])
    label = np.concatenate([np.ones(b), -np.ones(len(neg))])
    h, r, t = triples[:, 0], triples[:, 1], triples[:, 2]
    loss, gh, gr, gt = triple_loss_grads(operator, ent[h], rel[r], ent[t], label)
    n_ent = len(ent)
    g_ent = scatter_rows(np.concatenate([h, t]), np.concatenate([gh, gt]), n_ent)
    g_rel = scatter_rows(r, gr, len(rel))
    return float(loss.sum() / b), g_ent / b, g_rel / b


class _Adam:
    def __init__(self, params, lr):
        self.lr = lr
        self.t = 0
        self.m = [np.zeros_like(x) for x in params]
        self.v = [np.zeros_like(x) for x in params]

    def step(self, params, grads):
        b1, b2 = ADAM_BETAS
        self.t += 1
        c1, c2 = 1 - b1**self.t, 1 - b2**self.t
        for x, g, m, v in zip(params, grads, self.m, self.v):
            g = g.astype(x.dtype)
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            x -= (self.lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)).astype(x.dtype)


def train_core(store: TripleStore, core: CoreSubgraph, operator: str, cfg: TrainConfig) -> TrainResult:
    """Train embeddings for the core entities and for every relation of ``store``.

    ``store`` must carry inverse relations. Single-worker and deterministic
    for a fixed ``cfg.seed``.
    """
    operator = check_operator(operator)
    cfg.validate(operator)
    if not store.augmented:
        raise ValueError("train_core expects a store augmented with inverse relations")
    ids = np.asarray(core.entities, dtype=np.int64)
    local = np.full(store.n_entities, -1, dtype=np.int64)
    local[ids] = np.arange(len(ids))
    tidx = store.induced_triples(store.entity_mask(ids))
    triples = np.column_stack([local[store.heads[tidx]], store.relations[tidx], local[store.tails[tidx]]])

    rng = np.random.default_rng(cfg.seed)
    ent, rel = init_embeddings(operator, len(ids), store.n_relations, cfg.d, rng)
    losses = []
    if len(triples) and cfg.n_epoch:
        adam = _Adam([ent, rel], cfg.lr)
        for epoch in range(cfg.n_epoch):
            with np.errstate(over="ignore", invalid="ignore"):
                total = _run_epoch(operator, ent, rel, adam, triples, cfg, rng, epoch)
            losses.append(total / len(triples))
            logger.debug("epoch %d loss %.6f", epoch, losses[-1])
    return TrainResult(
        entity_ids=ids,
        entities=EmbeddingMatrix(ent, np.ones(len(ids), dtype=bool)),
        relations=EmbeddingMatrix(rel, np.ones(store.n_relations, dtype=bool)),
        losses=losses,
    )


def _run_epoch(operator, ent, rel, adam, triples, cfg, rng, epoch) -> float:
    order = rng.permutation(len(triples))
    total = 0.0
    for start in range(0, len(order), cfg.batch_size):
        pos = triples[order[start : start + cfg.batch_size]]
        neg = sample_negatives(pos, cfg.negatives, len(ent), rng)
        loss, g_ent, g_rel = batch_loss_grads(operator, ent, rel, pos, neg)
        if not np.isfinite(loss):
            raise Diverged(f"non-finite loss at epoch {epoch}")
        adam.step([ent, rel], [g_ent, g_rel])
        ent[:] = normalize_rows(ent)
        if operator == ROTATE:
            project_unit_modulus(rel)
        total += loss * len(pos)
    return total
