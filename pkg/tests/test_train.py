import numpy as np
import pytest
from scipy.stats import chisquare

from kgprop.core import select_core_degree
from kgprop.errors import ConfigError, Diverged
from kgprop.graph import add_inverse_relations
from kgprop.synthetic import planted_distmult
from kgprop.train import TrainConfig, batch_loss_grads, init_embeddings, sample_negatives, train_core, triple_loss_grads


@pytest.fixture(scope="module")
def planted():
    store, _ = planted_distmult(60, 2, 8, 3, seed=1)
    aug = add_inverse_relations(store)
    return aug, select_core_degree(aug, 1.0)


def test_one_negative_changes_one_slot():
    neg = sample_negatives(np.array([[3, 1, 7]]), 1, 10, np.random.default_rng(0))
    assert neg.shape == (1, 3)
    assert (neg != [[3, 1, 7]]).sum() == 1
    assert neg[0, 1] == 1


def test_negatives_alternate_and_exclude():
    pos = np.array([[0, 0, 1], [2, 0, 3]])
    neg = sample_negatives(pos, 6, 5, np.random.default_rng(1)).reshape(2, 6, 3)
    for k in range(2):
        for j in range(6):
            slot = 2 if j % 2 == 0 else 0
            other = 0 if slot == 2 else 2
            assert neg[k, j, other] == pos[k, other]
            assert neg[k, j, slot] != pos[k, slot]


def test_negatives_uniform_chi_square():
    rng = np.random.default_rng(2)
    pos = np.column_stack([rng.integers(0, 1000, 500), np.zeros(500, int), rng.integers(0, 1000, 500)])
    neg = sample_negatives(pos, 100, 1000, np.random.default_rng(3)).reshape(500, 100, 3)
    drawn = np.concatenate([neg[:, 0::2, 2].ravel(), neg[:, 1::2, 0].ravel()])
    counts = np.bincount(drawn, minlength=1000)
    assert chisquare(counts).pvalue > 0.01


def test_negatives_deterministic():
    pos = np.array([[0, 0, 1], [1, 0, 2]])
    a = sample_negatives(pos, 10, 50, np.random.default_rng(4))
    b = sample_negatives(pos, 10, 50, np.random.default_rng(4))
    assert np.array_equal(a, b)


@pytest.mark.parametrize("op", ["distmult", "transe", "rotate"])
def test_loss_gradients_finite_differences(op):
    rng = np.random.default_rng(5)
    eps = 1e-4
    for _ in range(20):
        h, r, t = rng.normal(size=(3, 6))
        label = rng.choice([-1.0, 1.0])
        _, gh, gr, gt = triple_loss_grads(op, h, r, t, label)
        for arg, grad in ((0, gh), (1, gr), (2, gt)):
            num = np.zeros(6)
            for j in range(6):
                plus = [h.copy(), r.copy(), t.copy()]
                minus = [h.copy(), r.copy(), t.copy()]
                plus[arg][j] += eps
                minus[arg][j] -= eps
                lp = triple_loss_grads(op, *plus, label)[0]
                lm = triple_loss_grads(op, *minus, label)[0]
                num[j] = (lp - lm) / (2 * eps)
            assert np.linalg.norm(num - grad) <= 1e-4 * np.linalg.norm(num)


@pytest.mark.parametrize("op", ["distmult", "transe", "rotate"])
def test_batch_gradients_finite_differences(op):
    rng = np.random.default_rng(6)
    ent, rel = rng.normal(size=(8, 4)), rng.normal(size=(3, 4))
    pos = np.column_stack([rng.integers(0, 8, 5), rng.integers(0, 3, 5), rng.integers(0, 8, 5)])
    neg = sample_negatives(pos, 4, 8, rng)
    _, g_ent, g_rel = batch_loss_grads(op, ent, rel, pos, neg)
    for x, g in ((ent, g_ent), (rel, g_rel)):
        num = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            orig = x[idx]
            x[idx] = orig + 1e-5
            lp = batch_loss_grads(op, ent, rel, pos, neg)[0]
            x[idx] = orig - 1e-5
            lm = batch_loss_grads(op, ent, rel, pos, neg)[0]
            x[idx] = orig
            num[idx] = (lp - lm) / 2e-5
        assert np.linalg.norm(num - g) <= 1e-4 * np.linalg.norm(num)


def test_zero_epochs_equals_init(planted):
    aug, core = planted
    cfg = TrainConfig(d=8, n_epoch=0, seed=3)
    res = train_core(aug, core, "distmult", cfg)
    ent, rel = init_embeddings("distmult", core.n_entities, aug.n_relations, 8, np.random.default_rng(3))
    assert np.array_equal(res.entities.values, ent) and np.array_equal(res.relations.values, rel)
    np.testing.assert_allclose(np.linalg.norm(ent, axis=1), 1.0, atol=1e-6)
    assert res.losses == []


def test_same_seed_bit_identical(planted):
    aug, core = planted
    cfg = TrainConfig(d=8, n_epoch=3, negatives=4, batch_size=32, seed=7)
    a, b = train_core(aug, core, "transe", cfg), train_core(aug, core, "transe", cfg)
    assert np.array_equal(a.entities.values, b.entities.values)
    assert np.array_equal(a.relations.values, b.relations.values)
    assert a.losses == b.losses


@pytest.mark.parametrize("op", ["distmult", "transe", "rotate"])
def test_post_step_norms(planted, op):
    aug, core = planted
    res = train_core(aug, core, op, TrainConfig(d=8, n_epoch=2, negatives=4, batch_size=64, lr=1e-2))
    assert res.entities.values.dtype == np.float32
    np.testing.assert_allclose(np.linalg.norm(res.entities.values.astype(float), axis=1), 1.0, atol=1e-5)
    assert res.relations.values.shape == (aug.n_relations, 8)
    if op == "rotate":
        rel = res.relations.values.astype(float)
        np.testing.assert_allclose(np.hypot(rel[:, 0::2], rel[:, 1::2]), 1.0, atol=1e-5)


def test_smoothed_loss_decreases(planted):
    aug, core = planted
    res = train_core(aug, core, "distmult", TrainConfig(d=16, n_epoch=30, negatives=8, batch_size=64, lr=1e-2))
    smooth = np.convolve(res.losses, np.ones(5) / 5, mode="valid")
    assert np.all(np.diff(smooth) <= 1e-9)


def test_divergence_detected(planted):
    aug, core = planted
    with pytest.raises(Diverged):
        train_core(aug, core, "transe", TrainConfig(d=8, n_epoch=5, negatives=2, batch_size=16, lr=1e200))


def test_config_validation(planted):
    aug, core = planted
    with pytest.raises(ConfigError) as err:
        train_core(aug, core, "rotate", TrainConfig(d=7))
    assert err.value.field == "d"
    with pytest.raises(ConfigError):
        TrainConfig(negatives=0).validate()
    plain, _ = planted_distmult(10, 1, 4, 2)
    with pytest.raises(ValueError, match="inverse"):
        train_core(plain, select_core_degree(plain, 1.0), "distmult", TrainConfig(d=4))
