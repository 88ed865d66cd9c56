"""Score and sort a query's candidate pool."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from juris.corpus import Document, Query
from juris.errors import DataError
from juris.features import DEFAULT_EPSILON, FeatureRow, FeatureVector, assemble_features
from juris.inference import GeneratorModel, IndicatorResult, infer
from juris.lexical import InvertedIndex, normalize_per_query, score_pool, tokenize, top_k
from juris.metrics import RankedList
from juris.scorer import ScorerModel, apply_mask, rule_score
from juris.taxonomy import Taxonomy

MLP = "mlp"
RULE = "rule"
LEXICAL = "lexical"
SCORER_KINDS = (MLP, RULE, LEXICAL)


@dataclass
class Pipeline:
    """Everything needed to rank one query.

    Indicators come from ``indicators`` when the query id is present there,
    otherwise from ``generator``; with neither, the query gets an empty
    indicator. ``fallback_k`` retrieves a BM25 top-k pool for queries that
    arrive without one.
    """

    index: InvertedIndex
    docs: Mapping[str, Document]
    scorer: ScorerModel | None = None
    kind: str = MLP
    indicators: Mapping[str, IndicatorResult] = field(default_factory=dict)
    generator: GeneratorModel | None = None
    taxonomy: Taxonomy | None = None
    feature_mask: Mapping[int, float] | None = None
    epsilon: float = DEFAULT_EPSILON
    fallback_k: int | None = None

    def __post_init__(self):
        if self.kind not in SCORER_KINDS:
            raise ValueError(f"unknown scorer kind {self.kind!r}")
        if self.kind == MLP and self.scorer is None:
            raise ValueError("an MLP pipeline needs a scorer model")

    def indicator_for(self, query: Query) -> IndicatorResult:
        if query.id in self.indicators:
            return self.indicators[query.id]
        if self.generator is not None and self.taxonomy is not None:
            return infer(self.generator, query, self.taxonomy)
        return IndicatorResult()


def candidate_pool(query: Query, pipeline: Pipeline) -> tuple[list[str], dict[str, float]]:
    """Candidate ids and their raw BM25 scores."""
    terms = tokenize(query.text, pipeline.index.tokenizer)
    if query.pool:
        missing = [d for d in query.pool if d not in pipeline.docs]
        if missing:
            raise DataError(f"query {query.id!r}: pool doc {missing[0]!r} is not in the corpus")
        return list(query.pool), score_pool(pipeline.index, terms, query.pool)
    if not pipeline.fallback_k:
        raise DataError(f"query {query.id!r} has an empty pool and no BM25 fallback is configured")
    hits = top_k(pipeline.index, terms, pipeline.fallback_k)
    if not hits:
        raise DataError(f"query {query.id!r}: BM25 fallback retrieved nothing")
    return [d for d, _ in hits], dict(hits)


def candidate_features(query: Query, pipeline: Pipeline) -> list[tuple[str, FeatureVector, float]]:
    pool, raw = candidate_pool(query, pipeline)
    norm = normalize_per_query(raw)
    indicator = pipeline.indicator_for(query)
    return [(d, assemble_features(indicator, pipeline.docs[d], norm[d], pipeline.epsilon), raw[d])
            for d in pool]


def score_candidates(cands: list[tuple[str, FeatureVector, float]], pipeline: Pipeline) -> dict[str, float]:
    if pipeline.kind == LEXICAL:
        return {d: raw for d, _, raw in cands}
    if pipeline.kind == RULE:
        return {d: rule_score(v) for d, v, _ in cands}
    X = np.array([v.as_array() for _, v, _ in cands])
    if pipeline.feature_mask:
        X = apply_mask(X, pipeline.feature_mask)
    scores = pipeline.scorer.predict(X)
    return {d: float(s) for (d, _, _), s in zip(cands, scores)}


def rank(query: Query, pipeline: Pipeline) -> RankedList:
    cands = candidate_features(query, pipeline)
    return RankedList.from_scores(query.id, score_candidates(cands, pipeline))


def feature_rows(query: Query, pipeline: Pipeline,
                 labels: Mapping[str, int] | None = None) -> list[FeatureRow]:
    labels = labels or {}
    return [FeatureRow(query.id, d, v, labels.get(d, 0)) for d, v, _ in candidate_features(query, pipeline)]
