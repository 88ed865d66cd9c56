import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from juris.explain import exact_shapley, global_importance, mean_baseline
from juris.features import FeatureRow, FeatureVector
from juris.scorer import ScorerModel, TrainConfig, train_scorer


def permutation_oracle(f, x, base):
    """Average marginal contribution over all n! feature orderings."""
    n = len(x)
    phi = np.zeros(n)
    perms = list(itertools.permutations(range(n)))
    for order in perms:
        cur = base.copy()
        prev = f(cur[None])[0]
        for i in order:
            cur[i] = x[i]
            now = f(cur[None])[0]
            phi[i] += now - prev
            prev = now
    return phi / len(perms)


def random_model(seed):
    model = ScorerModel.initialize(seed)
    rng = np.random.default_rng(seed)
    model.biases = [b + rng.normal(0, 0.5, b.shape) for b in model.biases]
    return model


@pytest.mark.parametrize("seed", range(10))
def test_efficiency_and_oracle(seed):
    model = random_model(seed)
    rng = np.random.default_rng(100 + seed)
    x, base = rng.random(5), rng.random(5)
    att = exact_shapley(model, x, base)
    assert abs(sum(att.phi) - (att.instance_value - att.base_value)) < 1e-9
    assert att.instance_value == pytest.approx(model.predict(x)[0], abs=1e-15)
    assert_allclose(att.phi, permutation_oracle(model, x, base), atol=1e-9, rtol=0)


def test_dummy_feature():
    model = random_model(3)
    model.weights[0][1, :] = 0.0
    att = exact_shapley(model, np.linspace(0.1, 0.9, 5), np.full(5, 0.5))
    assert abs(att.phi[1]) < 1e-12


def test_symmetry():
    model = random_model(4)
    model.weights[0][3, :] = model.weights[0][4, :]
    x = np.array([0.2, 0.4, 0.6, 0.9, 0.9])
    base = np.array([0.5, 0.5, 0.5, 0.1, 0.1])
    att = exact_shapley(model, x, base)
    assert abs(att.phi[3] - att.phi[4]) < 1e-9


def test_linear_rule_hand_example():
    att = exact_shapley(lambda X: 2 * X[:, 0], FeatureVector(v1=1.0), np.zeros(5))
    assert att.phi == pytest.approx((2.0, 0, 0, 0, 0), abs=1e-12)


def test_global_importance_examples():
    model = random_model(5)
    x, base = np.random.default_rng(0).random((2, 5))
    single = global_importance(model, [x], base)
    assert list(single.values()) == pytest.approx(np.abs(exact_shapley(model, x, base).phi), abs=1e-15)
    xs = list(np.random.default_rng(1).random((4, 5)))
    assert global_importance(model, xs, base) == pytest.approx(global_importance(model, xs + xs, base))
    with pytest.raises(ValueError):
        global_importance(model, [], base)


def test_planted_v3_dominates():
    rng = np.random.default_rng(0)
    rows = []
    for i in range(300):
        y = i % 2
        v = rng.random(5)
        v[2] = float(y)
        rows.append(FeatureRow("q", f"d{i}", FeatureVector.from_array(v), y))
    model, _ = train_scorer(rows, TrainConfig(learning_rate=1e-3, epochs=100))
    base = mean_baseline([r.features for r in rows])
    imp = global_importance(model, [r.features for r in rows[:60]], base)
    assert max(imp, key=imp.get) == "v3"
