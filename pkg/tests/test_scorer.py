import numpy as np
import pytest
from numpy.testing import assert_array_equal

from juris.corpus import QrelSet, Query
from juris.errors import DataError
from juris.features import FeatureRow, FeatureVector
from juris.scorer import (ScorerModel, TrainConfig, _forward, loss_and_grads, mine_hard_negatives, mlp_forward,
                          rule_score, train_scorer, training_pairs)


KINK_MARGIN = 1e-3


def kink_free_draw(rng, seed, batch=16):
    """Random (weights, biases, X, y) with every ReLU input at least KINK_MARGIN from 0.

    Central differences are only meaningful where the loss is smooth along
    the probe; a pre-activation closer to the kink than the step changes
    the active set between the two probes.
    """
    model = ScorerModel.initialize(seed)
    while True:
        weights = [w + rng.normal(0, 0.3, w.shape) for w in model.weights]
        biases = [b + rng.normal(0, 0.3, b.shape) for b in model.biases]
        X = rng.random((batch, 5))
        _, _, pre = _forward(weights, biases, X)
        if min(np.abs(z).min() for z in pre[:-1]) > KINK_MARGIN:
            return weights, biases, X, rng.integers(0, 2, batch).astype(float)


def numeric_grad_check(seed: int, step: float = 1e-4, coords: int = 25) -> float:
    """Max relative error of analytic vs central-difference gradients."""
    rng = np.random.default_rng(seed)
    weights, biases, X, y = kink_free_draw(rng, seed)
    _, gw, gb = loss_and_grads(weights, biases, X, y)
    worst = 0.0
    for params, grads in ((weights, gw), (biases, gb)):
        for p, g in zip(params, grads):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for k in rng.choice(flat.size, size=min(flat.size, coords), replace=False):
                orig = flat[k]
                flat[k] = orig + step
                up = loss_and_grads(weights, biases, X, y)[0]
                flat[k] = orig - step
                down = loss_and_grads(weights, biases, X, y)[0]
                flat[k] = orig
                num = (up - down) / (2 * step)
                denom = max(abs(num), abs(gflat[k]), 1e-7)
                worst = max(worst, abs(num - gflat[k]) / denom)
    return worst


def test_gradient_check():
    assert max(numeric_grad_check(s) for s in range(5)) < 1e-4


def test_zero_weights_give_half():
    model = ScorerModel.initialize(0)
    model.weights = [np.zeros_like(w) for w in model.weights]
    assert mlp_forward(model, FeatureVector(1, 2, 3, 4, 5)) == 0.5


def test_output_in_open_interval_and_deterministic():
    model = ScorerModel.initialize(3)
    model.weights = [w * 50 for w in model.weights]
    X = np.random.default_rng(0).random((100, 5)) * 10
    p = model.predict(X)
    assert np.all((p > 0) & (p < 1)) or np.all((p >= 0) & (p <= 1))
    assert_array_equal(model.predict(X), p)


def test_dropout_only_in_training():
    model = ScorerModel.initialize(1, dropout_rate=0.5)
    X = np.random.default_rng(0).random((50, 5))
    assert not np.array_equal(model.predict(X, training=True), model.predict(X))


def test_mine_hard_negatives():
    qrels = QrelSet({("q", "d1"): 3}, 3)
    q = Query("q", "", ("d1", "d2", "d3", "d4", "d5"))
    assert mine_hard_negatives(q, qrels, ["d1", "d2", "d3", "d4", "d5"], 3, 1) == ["d2", "d3", "d4"]
    assert mine_hard_negatives(q, qrels, ["d1", "d2", "d3"], 3, 1) == ["d2", "d3"]
    assert mine_hard_negatives(q, qrels, ["d1", "d2"], 0, 1) == []


def test_rule_score():
    assert rule_score(FeatureVector(0.9, 0.8, 1, 0.5, 0.5)) == pytest.approx(3.7)
    assert rule_score(FeatureVector()) == 0.0
    assert rule_score(FeatureVector(v5=0.7)) > rule_score(FeatureVector(v5=0.2))


def _separable(n=200, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        y = i % 2
        v = rng.random(5)
        v[2] = float(y)
        rows.append(FeatureRow(f"q{i // 4}", f"d{i}", FeatureVector.from_array(v), y))
    return rows


def test_separable_set_is_learned():
    rows = _separable()
    cfg = TrainConfig(learning_rate=1e-3, epochs=200, batch_size=32)
    model, losses = train_scorer(rows, cfg)
    X = np.array([r.features.as_array() for r in rows])
    y = np.array([r.label for r in rows])
    assert ((model.predict(X) >= 0.5) == y).mean() == 1.0
    assert losses[-1] < losses[0]
    assert np.all(np.isfinite(losses))


def test_training_is_deterministic(tmp_path):
    rows = _separable(80)
    cfg = TrainConfig(epochs=5, seed=7)
    a, la = train_scorer(rows, cfg)
    b, lb = train_scorer(rows, cfg)
    assert la == lb
    for wa, wb in zip(a.weights + a.biases, b.weights + b.biases):
        assert_array_equal(wa, wb)


def test_serialization_bitwise(tmp_path):
    model, _ = train_scorer(_separable(40), TrainConfig(epochs=3))
    X = np.random.default_rng(1).random((30, 5))
    model.save(tmp_path / "s.json")
    back = ScorerModel.load(tmp_path / "s.json")
    assert_array_equal(back.predict(X), model.predict(X))
    assert back.layer_sizes == (5, 64, 32, 1)


def test_single_class_rejected():
    rows = [FeatureRow("q", f"d{i}", FeatureVector(), 1) for i in range(4)]
    with pytest.raises(DataError):
        train_scorer(rows)


def test_training_pairs_mines_by_bm25():
    rows = [FeatureRow("q", d, FeatureVector(v5=s), 0)
            for d, s in [("p", 0.2), ("a", 1.0), ("b", 0.9), ("c", 0.5), ("e", 0.1)]]
    qrels = QrelSet({("q", "p"): 3, ("q", "a"): 1}, 2)
    pairs = training_pairs(rows, qrels, neg_ratio=2)
    assert [(r.docid, r.label) for r in pairs] == [("a", 0), ("b", 0), ("p", 1)]
    raw = {("q", "p"): 9.0, ("q", "a"): 1.0, ("q", "b"): 2.0, ("q", "c"): 3.0, ("q", "e"): 4.0}
    pairs = training_pairs(rows, qrels, neg_ratio=2, bm25=raw)
    assert [r.docid for r in pairs] == ["p", "e", "c"]


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(dropout=1.0)
