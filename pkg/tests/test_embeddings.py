import numpy as np
import pytest

from kgprop.embeddings import Checkpoint, EmbeddingMatrix, export_tsv, load_checkpoint, read_tsv, save_checkpoint
from kgprop.errors import ChecksumMismatch, UnknownFormat
from kgprop.pipeline import export_embeddings


def make_ckpt(n=3, d=4, op="distmult"):
    rng = np.random.default_rng(0)
    return Checkpoint(
        [f"ent{i}" for i in range(n)],
        ["r", "r__inverse"],
        rng.normal(size=(n, d)),
        rng.normal(size=(2, d)),
        op,
        meta={"note": "x"},
    )


def test_zero_mask_tracks_values():
    m = EmbeddingMatrix(np.array([[0.0, 0.0], [1.0, 0.0]]))
    assert m.zero_mask.tolist() == [True, False]
    m.values[0, 1] = 2.0
    assert m.zero_mask.tolist() == [False, False]


@pytest.mark.parametrize("op", ["distmult", "transe", "rotate"])
def test_checkpoint_roundtrip(tmp_path, op):
    ckpt = make_ckpt(op=op)
    save_checkpoint(ckpt, tmp_path / "c.spem")
    back = load_checkpoint(tmp_path / "c.spem")
    assert back == ckpt
    assert back.meta == {"note": "x"}
    raw = (tmp_path / "c.spem").read_bytes()
    assert raw[:4] == b"SPEM"


def test_checkpoint_corruption(tmp_path):
    save_checkpoint(make_ckpt(), tmp_path / "c.spem")
    raw = bytearray((tmp_path / "c.spem").read_bytes())
    raw[40] ^= 1
    (tmp_path / "bad.spem").write_bytes(bytes(raw))
    with pytest.raises(ChecksumMismatch):
        load_checkpoint(tmp_path / "bad.spem")
    (tmp_path / "other.bin").write_bytes(b"ABCD" + bytes(50))
    with pytest.raises(UnknownFormat):
        load_checkpoint(tmp_path / "other.bin")


def test_tsv_rows_and_roundtrip(tmp_path):
    ckpt = make_ckpt()
    export_tsv(ckpt, tmp_path / "e.tsv")
    lines = (tmp_path / "e.tsv").read_text().splitlines()
    assert len(lines) == 3 and all(len(line.split("\t")) == 5 for line in lines)
    labels, values = read_tsv(tmp_path / "e.tsv")
    assert labels == ckpt.entity_labels
    np.testing.assert_allclose(values, ckpt.entities, rtol=1e-6, atol=0)


def test_label_list_sidecar(tmp_path):
    save_checkpoint(make_ckpt(), tmp_path / "c.spem")
    (tmp_path / "labels.txt").write_text("ent2\nmissing\nent0\n")
    unmatched = export_embeddings(tmp_path / "c.spem", tmp_path / "e.tsv", "tsv", tmp_path / "labels.txt")
    assert unmatched == ["missing"]
    assert (tmp_path / "e.tsv.unmatched.txt").read_text() == "missing\n"
    assert [line.split("\t")[0] for line in (tmp_path / "e.tsv").read_text().splitlines()] == ["ent2", "ent0"]


def test_binary_passthrough(tmp_path):
    save_checkpoint(make_ckpt(), tmp_path / "c.spem")
    export_embeddings(tmp_path / "c.spem", tmp_path / "copy.spem", "binary")
    assert (tmp_path / "copy.spem").read_bytes() == (tmp_path / "c.spem").read_bytes()
    with pytest.raises(UnknownFormat):
        export_embeddings(tmp_path / "c.spem", tmp_path / "x", "parquet")
