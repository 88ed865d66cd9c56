"""Fusion scorer: a small MLP over the evidence vector, trained with BCE.

The network is ``5 -> 64 -> 32 -> 1`` with ReLU hidden layers, inverted
dropout during training and a logistic output. Backpropagation and the
Adam update are written out by hand in numpy.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from juris.corpus import QrelSet, Query
from juris.errors import DataError
from juris.features import FEATURE_ORDER, FeatureRow, FeatureVector
from juris.rng import stream

LAYER_SIZES = (5, 64, 32, 1)
PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 64
    epochs: int = 50
    neg_ratio: int = 3
    dropout: float = 0.1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("learning_rate, batch_size and epochs must be positive")
        if self.neg_ratio < 0 or not 0.0 <= self.dropout < 1.0:
            raise ValueError("neg_ratio must be >= 0 and dropout in [0, 1)")


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class ScorerModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout_rate: float = 0.1
    feature_order: tuple[str, ...] = FEATURE_ORDER
    rng_seed: int = 0
    config: dict = field(default_factory=dict)
    _rng: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        dims = [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]
        for w, b, (i, o) in zip(self.weights, self.biases, zip(dims, dims[1:])):
            if w.shape != (i, o) or b.shape != (o,):
                raise DataError(f"layer shapes do not chain: {w.shape} / {b.shape}")
        if dims[-1] != 1:
            raise DataError("scorer must end in a single output unit")
        if self._rng is None:
            self._rng = stream(self.rng_seed, "scorer/dropout")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0], *(w.shape[1] for w in self.weights))

    @classmethod
    def initialize(cls, seed: int = 0, sizes: Sequence[int] = LAYER_SIZES,
                   dropout_rate: float = 0.1) -> "ScorerModel":
        """Glorot-uniform weights, zero biases."""
        rng = stream(seed, "scorer/init")
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, dropout_rate, rng_seed=seed)

    def draw_masks(self, n: int) -> list[np.ndarray]:
        keep = 1.0 - self.dropout_rate
        return [(self._rng.random((n, w.shape[1])) < keep) / keep for w in self.weights[:-1]]

    def predict(self, X: np.ndarray, training: bool = False) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        masks = self.draw_masks(len(X)) if training and self.dropout_rate > 0 else None
        return _forward(self.weights, self.biases, X, masks)[0]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return self.predict(X)

    def to_json(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "activation": "relu",
            "output": "logistic",
            "dropout_rate": self.dropout_rate,
            "feature_order": list(self.feature_order),
            "seed": self.rng_seed,
            "config": self.config,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ScorerModel":
        if tuple(obj["feature_order"]) != FEATURE_ORDER:
            raise DataError(f"scorer feature order {obj['feature_order']} != {list(FEATURE_ORDER)}")
        return cls(
            weights=[np.array(w, dtype=np.float64).reshape(i, o) for w, i, o in
                     zip(obj["weights"], obj["layer_sizes"], obj["layer_sizes"][1:])],
            biases=[np.array(b, dtype=np.float64) for b in obj["biases"]],
            dropout_rate=float(obj["dropout_rate"]),
            feature_order=tuple(obj["feature_order"]),
            rng_seed=int(obj["seed"]),
            config=dict(obj.get("config", {})),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> "ScorerModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _forward(weights, biases, X, masks=None):
    acts = [X]
    pre = []
    h = X
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = h @ w + b
        pre.append(z)
        if i == last:
            h = sigmoid(z)
        else:
            h = np.maximum(z, 0.0)
            if masks is not None:
                h = h * masks[i]
        acts.append(h)
    return h[:, 0], acts, pre


def mlp_forward(model: ScorerModel, v: FeatureVector, training: bool = False) -> float:
    return float(model.predict(v.as_array()[None, :], training=training)[0])


def bce_loss(prob: np.ndarray, y: np.ndarray) -> float:
    p = np.clip(prob, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def loss_and_grads(weights, biases, X, y, masks=None):
    """Mean BCE and its gradients with respect to every weight and bias."""
    prob, acts, pre = _forward(weights, biases, X, masks)
    n = len(X)
    delta = ((prob - y) / n)[:, None]
    gw = [None] * len(weights)
    gb = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ weights[i].T
            if masks is not None:
                delta = delta * masks[i - 1]
            delta = delta * (pre[i - 1] > 0)
    return bce_loss(prob, y), gw, gb


def rule_score(v: FeatureVector) -> float:
    return float(v.v1 + v.v2 + v.v3 + v.v4 + v.v5)


def mine_hard_negatives(query: Query | str, qrels: QrelSet, bm25_ranking: Sequence[str],
                        neg_ratio: int = 3, num_pos: int = 1) -> list[str]:
    """The first ``neg_ratio * num_pos`` non-positive docs in BM25 order."""
    qid = query if isinstance(query, str) else query.id
    want = neg_ratio * num_pos
    if want <= 0:
        return []
    out = []
    for doc_id in bm25_ranking:
        if not qrels.is_positive(qid, doc_id):
            out.append(doc_id)
            if len(out) == want:
                break
    return out


def training_pairs(rows: Iterable[FeatureRow], qrels: QrelSet, neg_ratio: int = 3,
                   bm25: Mapping[tuple[str, str], float] | None = None) -> list[FeatureRow]:
    """Positives plus BM25-mined hard negatives per query, labels binarized.

    Candidates are ordered by raw BM25 when ``bm25`` is given, otherwise by
    the normalized lexical feature (same order within a pool).
    """
    by_query: dict[str, list[FeatureRow]] = {}
    for r in rows:
        by_query.setdefault(r.qid, []).append(r)
    out: list[FeatureRow] = []
    for qid, cands in by_query.items():
        def lexical(r: FeatureRow) -> float:
            return bm25[(r.qid, r.docid)] if bm25 is not None else r.features.v5
        ordered = sorted(cands, key=lambda r: (-lexical(r), r.docid))
        pos = {r.docid for r in ordered if qrels.is_positive(qid, r.docid)}
        if not pos:
            continue
        negs = set(mine_hard_negatives(qid, qrels, [r.docid for r in ordered], neg_ratio, len(pos)))
        for r in ordered:
            if r.docid in pos or r.docid in negs:
                out.append(FeatureRow(qid, r.docid, r.features, int(r.docid in pos)))
    return out


def train_scorer(pairs: Sequence[FeatureRow], cfg: TrainConfig = TrainConfig(),
                 feature_mask: Mapping[int, float] | None = None) -> tuple[ScorerModel, list[float]]:
    """Mini-batch Adam on mean BCE; returns the model and per-epoch mean loss.

    ``feature_mask`` maps column index -> constant that replaces that column.
    """
    if not pairs:
        raise DataError("no training pairs")
    X = np.array([p.features.as_array() for p in pairs])
    y = np.array([float(p.label) for p in pairs])
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataError("training labels must be 0 or 1")
    if y.min() == y.max():
        raise DataError("training set has a single class")
    if feature_mask:
        X = apply_mask(X, feature_mask)

    model = ScorerModel.initialize(cfg.seed, dropout_rate=cfg.dropout)
    model.config = {k: v for k, v in asdict(cfg).items()}
    shuffle = stream(cfg.seed, "scorer/shuffle")
    m_w = [np.zeros_like(w) for w in model.weights]
    v_w = [np.zeros_like(w) for w in model.weights]
    m_b = [np.zeros_like(b) for b in model.biases]
    v_b = [np.zeros_like(b) for b in model.biases]
    step = 0
    losses = []
    for _ in range(cfg.epochs):
        order = shuffle.permutation(len(X))
        total = 0.0
        for start in range(0, len(X), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            masks = model.draw_masks(len(idx)) if cfg.dropout > 0 else None
            loss, gw, gb = loss_and_grads(model.weights, model.biases, X[idx], y[idx], masks)
            total += loss * len(idx)
            step += 1
            c1 = 1.0 - cfg.beta1 ** step
            c2 = 1.0 - cfg.beta2 ** step
            for params, grads, m, v in ((model.weights, gw, m_w, v_w), (model.biases, gb, m_b, v_b)):
                for i, g in enumerate(grads):
                    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g
                    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g
                    params[i] = params[i] - cfg.learning_rate * (m[i] / c1) / (np.sqrt(v[i] / c2) + cfg.adam_eps)
        losses.append(total / len(X))
    model._rng = stream(cfg.seed, "scorer/dropout")
    return model, losses


def apply_mask(X: np.ndarray, feature_mask: Mapping[int, float]) -> np.ndarray:
    X = np.array(X, dtype=np.float64, copy=True)
    for col, value in feature_mask.items():
        X[:, col] = value
    return X
