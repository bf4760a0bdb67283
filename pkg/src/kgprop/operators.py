"""Relational operators, triple scores and their analytic gradients.

RotatE vectors hold ``d/2`` complex numbers as interleaved ``(re, im)``
pairs. All functions broadcast over leading axes; the last axis is the
embedding dimension.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionMismatch

DISTMULT = "distmult"
TRANSE = "transe"
ROTATE = "rotate"
OPERATORS = (DISTMULT, TRANSE, ROTATE)
OPERATOR_CODES = {DISTMULT: 0, TRANSE: 1, ROTATE: 2}

_EPS = 1e-12


def check_operator(op: str) -> str:
    name = str(op).lower()
    if name not in OPERATORS:
        raise ConfigError("operator", f"unknown operator {op!r}; expected one of {OPERATORS}")
    return name


def check_dim(op: str, d: int):
    if d < 1:
        raise ConfigError("d", "embedding dimension must be positive")
    if check_operator(op) == ROTATE and d % 2:
        raise ConfigError("d", "RotatE needs an even dimension")


def _check(*arrays):
    dims = {np.shape(a)[-1] for a in arrays}
    if len(dims) != 1:
        raise DimensionMismatch(f"embedding dimensions differ: {sorted(dims)}")


def _as_complex(x):
    x = np.ascontiguousarray(x)
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float64)
    return x.view(np.complex64 if x.dtype == np.float32 else np.complex128)


def _as_real(z):
    return z.view(np.float32 if z.dtype == np.complex64 else np.float64)


def _cmul(a, b):
    a, b = np.asarray(a), np.asarray(b)
    dtype = np.result_type(a, b)
    return _as_real(_as_complex(a.astype(dtype, copy=False)) * _as_complex(b.astype(dtype, copy=False)))


def _cmul_conj(a, b):
    """``a * conj(b)`` on interleaved pairs."""
    a, b = np.asarray(a), np.asarray(b)
    dtype = np.result_type(a, b)
    return _as_real(
        _as_complex(a.astype(dtype, copy=False)) * np.conj(_as_complex(b.astype(dtype, copy=False)))
    )


def phi(op: str, head, rel):
    """Transform head embeddings by relation embeddings."""
    head, rel = np.asarray(head), np.asarray(rel)
    _check(head, rel)
    op = check_operator(op)
    if op == DISTMULT:
        return head * rel
    if op == TRANSE:
        return head + rel
    if head.shape[-1] % 2:
        raise DimensionMismatch("RotatE needs an even dimension")
    return _cmul(head, rel)


def score(op: str, head, rel, tail):
    """Plausibility ``f(h, r, t)``; higher is more plausible.

    DistMult scores ``<phi, t>``; TransE and RotatE score ``-||phi - t||``.
    """
    tail = np.asarray(tail)
    _check(head, rel, tail)
    p = phi(op, head, rel)
    if check_operator(op) == DISTMULT:
        return np.sum(p * tail, axis=-1, dtype=np.float64)
    diff = p - tail
    return -np.sqrt(np.sum(diff * diff, axis=-1, dtype=np.float64))


def score_grads(op: str, head, rel, tail):
    """Scores and their gradients with respect to head, relation and tail.

    Returns ``(f, df_dhead, df_drel, df_dtail)``. For the distance-based
    operators the gradient at a zero distance is taken as zero.
    """
    head, rel, tail = np.asarray(head), np.asarray(rel), np.asarray(tail)
    op = check_operator(op)
    f = score(op, head, rel, tail)
    if op == DISTMULT:
        return f, rel * tail, head * tail, head * rel
    diff = phi(op, head, rel) - tail
    # d(-||diff||)/d(diff) = -diff / ||diff||
    g = -diff / np.maximum(-f, _EPS)[..., None].astype(diff.dtype, copy=False)
    if op == TRANSE:
        return f, g, g, -g
    return f, _cmul_conj(g, rel), _cmul_conj(g, head), -g


def project_unit_modulus(rel: np.ndarray) -> np.ndarray:
    """Rescale every interleaved complex pair to modulus one (in place)."""
    re, im = rel[..., 0::2], rel[..., 1::2]
    mod = np.sqrt(re * re + im * im)
    mod = np.where(mod > 0, mod, 1)
    rel[..., 0::2] = re / mod
    rel[..., 1::2] = im / mod
    return rel
