"""Embedding matrices and the binary checkpoint format."""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ChecksumMismatch, UnknownFormat
from .operators import OPERATOR_CODES, check_operator

CKPT_MAGIC = b"SPEM"
CKPT_VERSION = 1
_HEADER = struct.Struct("<4sHBBQQI")


@dataclass
class EmbeddingMatrix:
    """Dense ``rows x d`` matrix with a per-row freeze flag.

    ``zero_mask`` is derived from the values, so a row is flagged exactly
    when it is the zero vector.
    """

    values: np.ndarray
    frozen: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValueError("embedding matrix must be 2-D")
        if self.frozen is None:
            self.frozen = np.zeros(len(self.values), dtype=bool)
        self.frozen = np.asarray(self.frozen, dtype=bool)

    @property
    def zero_mask(self) -> np.ndarray:
        return ~self.values.any(axis=1)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return len(self.values)

    def copy(self) -> EmbeddingMatrix:
        return EmbeddingMatrix(self.values.copy(), self.frozen.copy())


@dataclass
class Checkpoint:
    """Entity and relation embeddings with their label tables."""

    entity_labels: list
    relation_labels: list
    entities: np.ndarray
    relations: np.ndarray
    operator: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.operator = check_operator(self.operator)
        self.entities = np.asarray(self.entities, dtype=np.float32)
        self.relations = np.asarray(self.relations, dtype=np.float32)
        if len(self.entity_labels) != len(self.entities):
            raise ValueError("entity label table does not match the matrix")
        if len(self.relation_labels) != len(self.relations):
            raise ValueError("relation label table does not match the matrix")

    @property
    def dim(self) -> int:
        return self.entities.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return (
            list(self.entity_labels) == list(other.entity_labels)
            and list(self.relation_labels) == list(other.relation_labels)
            and self.operator == other.operator
            and np.array_equal(self.entities, other.entities)
            and np.array_equal(self.relations, other.relations)
        )


def _blob(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<Q", len(raw)) + raw


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    d = ckpt.entities.shape[1] if ckpt.entities.ndim == 2 else ckpt.relations.shape[1]
    body = b"".join(
        [
            _HEADER.pack(
                CKPT_MAGIC,
                CKPT_VERSION,
                OPERATOR_CODES[ckpt.operator],
                0,
                len(ckpt.entities),
                len(ckpt.relations),
                d,
            ),
            ckpt.entities.astype("<f4").tobytes(),
            ckpt.relations.astype("<f4").tobytes(),
            _blob("\n".join(ckpt.entity_labels)),
            _blob("\n".join(ckpt.relation_labels)),
            _blob(json.dumps(ckpt.meta, sort_keys=True)),
        ]
    )
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(ckpt))


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:4] != CKPT_MAGIC:
        raise UnknownFormat(f"{path}: not an embedding checkpoint")
    if len(data) < _HEADER.size + 4:
        raise ChecksumMismatch(f"{path}: truncated checkpoint")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumMismatch(f"{path}: checksum mismatch")
    _, version, code, _, n_ent, n_rel, d = _HEADER.unpack_from(body)
    if version != CKPT_VERSION:
        raise UnknownFormat(f"{path}: unsupported checkpoint version {version}")
    op = {v: k for k, v in OPERATOR_CODES.items()}[code]
    off = _HEADER.size
    ent = np.frombuffer(body, dtype="<f4", count=n_ent * d, offset=off).reshape(n_ent, d)
    off += 4 * n_ent * d
    rel = np.frombuffer(body, dtype="<f4", count=n_rel * d, offset=off).reshape(n_rel, d)
    off += 4 * n_rel * d
    texts = []
    for _ in range(3):
        (length,) = struct.unpack_from("<Q", body, off)
        off += 8
        texts.append(body[off : off + length].decode("utf-8"))
        off += length
    ent_labels = texts[0].split("\n") if n_ent else []
    rel_labels = texts[1].split("\n") if n_rel else []
    return Checkpoint(ent_labels, rel_labels, ent.copy(), rel.copy(), op, json.loads(texts[2]))


def export_tsv(ckpt: Checkpoint, path, labels=None) -> list:
    """Write ``label<TAB>v1<TAB>...<TAB>vd`` rows (9 significant digits).

    With ``labels``, only those labels are written, in the given order, and
    the unmatched ones are listed in ``<path>.unmatched.txt``. Returns the
    unmatched labels.
    """
    index = {label: i for i, label in enumerate(ckpt.entity_labels)}
    wanted = list(ckpt.entity_labels) if labels is None else list(labels)
    unmatched = [label for label in wanted if label not in index]
    with open(path, "w", encoding="utf-8") as f:
        for label in wanted:
            i = index.get(label)
            if i is None:
                continue
            f.write(label + "\t" + "\t".join(f"{x:.9g}" for x in ckpt.entities[i].tolist()) + "\n")
    if labels is not None:
        Path(str(path) + ".unmatched.txt").write_text(
            "".join(f"{label}\n" for label in unmatched), encoding="utf-8"
        )
    return unmatched


def read_tsv(path) -> tuple:
    labels, rows = [], []
    with open(path, encoding="utf-8") as f:
        for line in f:
            fields = line.rstrip("\n").split("\t")
            labels.append(fields[0])
            rows.append([float(x) for x in fields[1:]])
    return labels, np.array(rows, dtype=np.float64)
