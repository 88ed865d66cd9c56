"""Ablation, attribution and data-efficiency experiments over a dataset."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from juris.corpus import Document, QrelSet, Query
from juris.explain import global_importance, mean_baseline
from juris.features import FeatureRow
from juris.inference import (FILE_BACKED, HIERARCHICAL, INDEPENDENT, GeneratorModel,
                             IndicatorResult, fit_generator, infer_all)
from juris.lexical import InvertedIndex, TokenizerConfig, build_index, tokenize, top_k
from juris.metrics import MetricsReport, RankedList, metrics_suite
from juris.pipeline import LEXICAL, MLP, RULE, Pipeline, candidate_features, score_candidates
from juris.rng import stream
from juris.scorer import ScorerModel, TrainConfig, apply_mask, train_scorer, training_pairs
from juris.taxonomy import Taxonomy

# variant -> (masked feature columns, scorer kind, indicator source)
VARIANTS: dict[str, tuple[tuple[int, ...], str, str]] = {
    "full": ((), MLP, HIERARCHICAL),
    "w/o-lexical": ((4,), MLP, HIERARCHICAL),
    "w/o-charge": ((0, 2), MLP, HIERARCHICAL),
    "w/o-element": ((1, 3), MLP, HIERARCHICAL),
    "only-lexical": ((0, 1, 2, 3), LEXICAL, HIERARCHICAL),
    "only-charge": ((1, 3, 4), MLP, HIERARCHICAL),
    "only-element": ((0, 2, 4), MLP, HIERARCHICAL),
    "rule-based": ((), RULE, HIERARCHICAL),
    "independent-generation": ((), MLP, INDEPENDENT),
    "file-backed-off": ((), MLP, "borrowed"),
}
SWEEP_RATIOS = (0.1, 0.3, 0.5, 0.7, 1.0)


@dataclass
class Dataset:
    docs: list[Document]
    train_queries: list[Query]
    test_queries: list[Query]
    qrels: QrelSet
    taxonomy: Taxonomy
    # Externally generated indicators; when present they replace the built-in generator.
    indicators: dict[str, IndicatorResult] | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    tokenizer: TokenizerConfig = TokenizerConfig()
    k1: float = 1.2
    b: float = 0.75
    smoothing_alpha: float = 1.0
    top_k_elements: int = 6
    train: TrainConfig = TrainConfig()
    fallback_k: int | None = 100
    epsilon: float = 1e-9


@dataclass
class VariantResult:
    variant: str
    report: MetricsReport
    rankings: list[RankedList]
    model: ScorerModel | None = None
    baseline: np.ndarray | None = None
    train_rows: list[FeatureRow] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)


def split_queries(queries: Sequence[Query], train_fraction: float = 0.8,
                  seed: int = 42) -> tuple[list[Query], list[Query]]:
    """Seeded random train/test split; both halves keep file order."""
    order = stream(seed, "split").permutation(len(queries))
    cut = int(round(train_fraction * len(queries)))
    train_idx = set(order[:cut].tolist())
    train = [q for i, q in enumerate(queries) if i in train_idx]
    test = [q for i, q in enumerate(queries) if i not in train_idx]
    return train, test


def stratified_subsample(docs: Sequence[Document], ratio: float, seed: int = 0) -> list[Document]:
    """Sample ceil(ratio * n) docs from every charge class; input order kept.

    A document's class is its full (sorted) charge set, so every charge set
    present in the input survives.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError("ratio must be in (0, 1]")
    strata: dict[tuple[str, ...], list[int]] = {}
    for i, d in enumerate(docs):
        strata.setdefault(tuple(sorted(d.charges)), []).append(i)
    rng = stream(seed, "subsample")
    chosen: set[int] = set()
    for key in sorted(strata):
        members = strata[key]
        take = min(len(members), math.ceil(ratio * len(members) - 1e-9))
        picked = rng.choice(len(members), size=take, replace=False)
        chosen.update(members[j] for j in picked)
    return [d for i, d in enumerate(docs) if i in chosen]


def borrowed_indicators(index: InvertedIndex, docs_by_id: dict[str, Document],
                        queries: Iterable[Query]) -> dict[str, IndicatorResult]:
    """Indicators taken from each query's BM25 top-1 document, no generator involved."""
    out = {}
    for q in queries:
        hits = top_k(index, tokenize(q.text, index.tokenizer), 1)
        if not hits:
            out[q.id] = IndicatorResult(provenance=FILE_BACKED)
            continue
        doc = docs_by_id[hits[0][0]]
        out[q.id] = IndicatorResult(doc.charges, doc.elements,
                                    1.0 if doc.charges else 0.0,
                                    1.0 if doc.elements else 0.0, FILE_BACKED)
    return out


class Experiment:
    """Shared state for running several variants over one dataset."""

    def __init__(self, data: Dataset, cfg: ExperimentConfig = ExperimentConfig(),
                 generator_docs: Sequence[Document] | None = None):
        self.data = data
        self.cfg = cfg
        self.docs_by_id = {d.id: d for d in data.docs}
        self.index = build_index(data.docs, cfg.tokenizer, cfg.k1, cfg.b)
        self.generator_docs = list(generator_docs) if generator_docs is not None else data.docs
        self._generators: dict[str, GeneratorModel] = {}
        self._indicators: dict[str, dict[str, IndicatorResult]] = {}

    @property
    def queries(self) -> list[Query]:
        return self.data.train_queries + self.data.test_queries

    def generator(self, mode: str) -> GeneratorModel:
        if mode not in self._generators:
            self._generators[mode] = fit_generator(
                self.generator_docs, self.data.taxonomy, mode, self.cfg.smoothing_alpha,
                self.cfg.top_k_elements, self.cfg.tokenizer)
        return self._generators[mode]

    def indicators(self, source: str) -> dict[str, IndicatorResult]:
        if source not in self._indicators:
            if source == "borrowed":
                ind = borrowed_indicators(self.index, self.docs_by_id, self.queries)
            elif source == HIERARCHICAL and self.data.indicators is not None:
                ind = dict(self.data.indicators)
            else:
                ind = infer_all(self.generator(source), self.queries, self.data.taxonomy)
            self._indicators[source] = ind
        return self._indicators[source]

    def pipeline(self, source: str, kind: str = RULE, scorer: ScorerModel | None = None,
                 mask: dict[int, float] | None = None) -> Pipeline:
        return Pipeline(self.index, self.docs_by_id, scorer=scorer, kind=kind,
                        indicators=self.indicators(source), feature_mask=mask,
                        epsilon=self.cfg.epsilon, fallback_k=self.cfg.fallback_k)

    def candidates(self, source: str, queries: Iterable[Query]):
        pipe = self.pipeline(source)
        return {q.id: candidate_features(q, pipe) for q in queries}

    def run(self, variant: str, train_cfg: TrainConfig | None = None) -> VariantResult:
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}")
        masked, kind, source = VARIANTS[variant]
        train_cfg = train_cfg or self.cfg.train

        model = None
        baseline = None
        mask = None
        rows: list[FeatureRow] = []
        losses: list[float] = []
        if kind == MLP:
            cands = self.candidates(source, self.data.train_queries)
            all_rows = [FeatureRow(qid, d, v, 0) for qid, cs in cands.items() for d, v, _ in cs]
            raw = {(qid, d): s for qid, cs in cands.items() for d, _, s in cs}
            rows = training_pairs(all_rows, self.data.qrels, train_cfg.neg_ratio, raw)
            baseline = mean_baseline([r.features for r in rows])
            mask = {i: float(baseline[i]) for i in masked}
            model, losses = train_scorer(rows, train_cfg, mask)

        pipe = self.pipeline(source, kind, model, mask)
        test = self.candidates(source, self.data.test_queries)
        rankings = [RankedList.from_scores(q.id, score_candidates(test[q.id], pipe))
                    for q in self.data.test_queries]
        return VariantResult(variant, metrics_suite(rankings, self.data.qrels), rankings,
                             model, baseline, rows, losses)

    def importance(self, result: VariantResult, positives_only: bool = False) -> dict[str, float]:
        if result.model is None:
            raise ValueError(f"variant {result.variant!r} has no trained scorer")
        rows = [r for r in result.train_rows if r.label == 1 or not positives_only]
        X = np.array([r.features.as_array() for r in rows])
        masked = VARIANTS[result.variant][0]
        if masked:
            # attribute what the model saw: masked columns pinned to the baseline
            X = apply_mask(X, {i: float(result.baseline[i]) for i in masked})
        return global_importance(result.model, X, result.baseline)


def run_ablation(variant: str, data: Dataset, cfg: ExperimentConfig = ExperimentConfig()) -> MetricsReport:
    return Experiment(data, cfg).run(variant).report


def data_efficiency_sweep(data: Dataset, ratios: Sequence[float] = SWEEP_RATIOS,
                          cfg: ExperimentConfig = ExperimentConfig(),
                          seed: int = 0) -> list[tuple[float, MetricsReport]]:
    """Fit the generator on stratified subsets of the corpus, evaluate the full model."""
    out = []
    for ratio in sorted(ratios):
        subset = stratified_subsample(data.docs, ratio, seed)
        exp = Experiment(replace(data, indicators=None), cfg, generator_docs=subset)
        out.append((ratio, exp.run("full").report))
    return out
