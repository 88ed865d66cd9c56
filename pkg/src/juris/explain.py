"""Exact Shapley attribution of a scorer over its five input features.

With five features there are only 32 coalitions, so every value is computed
by full enumeration; no sampling is involved.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from juris.features import FEATURE_ORDER, FeatureVector

Scorer = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Attribution:
    phi: tuple[float, ...]
    base_value: float
    instance_value: float

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_ORDER, self.phi))


def _as_array(v) -> np.ndarray:
    return v.as_array() if isinstance(v, FeatureVector) else np.asarray(v, dtype=np.float64)


def _coalition_masks(n: int) -> np.ndarray:
    return np.array(list(itertools.product((False, True), repeat=n)))


def _shapley_weights(n: int) -> np.ndarray:
    return np.array([math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n)
                     for s in range(n)])


def exact_shapley(model: Scorer, v, baseline) -> Attribution:
    """Shapley values of ``model`` at ``v`` relative to ``baseline``.

    A coalition's value is the model output on a vector that takes the
    instance values on the coalition and baseline values elsewhere.
    """
    x = _as_array(v)
    base = _as_array(baseline)
    n = len(x)
    masks = _coalition_masks(n)
    values = np.asarray(model(np.where(masks, x, base)), dtype=np.float64).reshape(-1)
    index = {tuple(m): k for k, m in enumerate(masks)}
    weights = _shapley_weights(n)

    phi = np.zeros(n)
    for m, value in zip(masks, values):
        size = int(m.sum())
        for i in range(n):
            if m[i]:
                continue
            with_i = m.copy()
            with_i[i] = True
            phi[i] += weights[size] * (values[index[tuple(with_i)]] - value)
    return Attribution(tuple(float(p) for p in phi),
                       float(values[index[(False,) * n]]),
                       float(values[index[(True,) * n]]))


def global_importance(model: Scorer, instances: Iterable, baseline) -> dict[str, float]:
    """Mean absolute Shapley value per feature."""
    rows = [exact_shapley(model, v, baseline).phi for v in instances]
    if not rows:
        raise ValueError("no instances to attribute")
    mean_abs = np.abs(np.array(rows)).mean(axis=0)
    return {name: float(x) for name, x in zip(FEATURE_ORDER, mean_abs)}


def mean_baseline(vectors: Sequence) -> np.ndarray:
    """Reference point for attribution: the mean feature vector."""
    if not len(vectors):
        raise ValueError("no vectors to average")
    return np.mean([_as_array(v) for v in vectors], axis=0)
