"""Ranking metrics, run files, and a paired randomization test."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from juris.corpus import QrelSet
from juris.errors import DataError
from juris.rng import stream

HEADLINE = ("MAP", "P@3", "R@3", "R@5", "Hits@3", "Hits@5", "MRR@5")
OPTIONAL = ("NDCG@5",)


@dataclass(frozen=True)
class RankedList:
    qid: str
    items: tuple[tuple[str, float], ...]

    @classmethod
    def from_scores(cls, qid: str, scores: Mapping[str, float]) -> "RankedList":
        """Descending score, ties broken by ascending doc id."""
        return cls(qid, tuple(sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))))

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.items]


class NoPositives(ValueError):
    """The query has no positive judgments; it is excluded from means."""


def _ids(ranking: RankedList | Sequence[str]) -> list[str]:
    return ranking.doc_ids if isinstance(ranking, RankedList) else list(ranking)


def average_precision(ranking: RankedList | Sequence[str], positives: set[str]) -> float:
    if not positives:
        raise NoPositives("average precision is undefined without positives")
    hits = 0
    total = 0.0
    for rank, doc in enumerate(_ids(ranking), start=1):
        if doc in positives:
            hits += 1
            total += hits / rank
    return total / len(positives)


def hits_in_top(ranking, positives: set[str], k: int) -> int:
    return sum(1 for d in _ids(ranking)[:k] if d in positives)


def precision_at(ranking, positives: set[str], k: int) -> float:
    return hits_in_top(ranking, positives, k) / k


def recall_at(ranking, positives: set[str], k: int) -> float:
    if not positives:
        raise NoPositives("recall is undefined without positives")
    return hits_in_top(ranking, positives, k) / len(positives)


def hit_at(ranking, positives: set[str], k: int) -> float:
    return 1.0 if hits_in_top(ranking, positives, k) else 0.0


def mrr_at(ranking, positives: set[str], k: int) -> float:
    for rank, doc in enumerate(_ids(ranking)[:k], start=1):
        if doc in positives:
            return 1.0 / rank
    return 0.0


def ndcg_at(ranking, gains: Mapping[str, int], k: int) -> float:
    """Graded NDCG with linear gain and log2 discount."""
    dcg = sum(gains.get(d, 0) / math.log2(r + 1) for r, d in enumerate(_ids(ranking)[:k], start=1))
    ideal = sorted((g for g in gains.values() if g > 0), reverse=True)[:k]
    idcg = sum(g / math.log2(r + 1) for r, g in enumerate(ideal, start=1))
    return dcg / idcg if idcg > 0 else 0.0


def query_metrics(ranking, positives: set[str], gains: Mapping[str, int] | None = None) -> dict[str, float]:
    out = {
        "MAP": average_precision(ranking, positives),
        "P@3": precision_at(ranking, positives, 3),
        "R@3": recall_at(ranking, positives, 3),
        "R@5": recall_at(ranking, positives, 5),
        "Hits@3": hit_at(ranking, positives, 3),
        "Hits@5": hit_at(ranking, positives, 5),
        "MRR@5": mrr_at(ranking, positives, 5),
    }
    if gains is not None:
        out["NDCG@5"] = ndcg_at(ranking, gains, 5)
    return out


@dataclass
class MetricsReport:
    per_query: dict[str, dict[str, float]] = field(default_factory=dict)
    mean: dict[str, float] = field(default_factory=dict)
    excluded: list[str] = field(default_factory=list)

    @property
    def num_queries(self) -> int:
        return len(self.per_query)

    def to_json(self) -> dict:
        return {
            "mean": self.mean,
            "num_queries": self.num_queries,
            "num_excluded": len(self.excluded),
            "excluded": sorted(self.excluded),
            "per_query": {q: self.per_query[q] for q in sorted(self.per_query)},
        }

    def column(self, metric: str) -> list[float]:
        return [self.per_query[q][metric] for q in sorted(self.per_query)]


def metrics_suite(rankings: Iterable[RankedList], qrels: QrelSet) -> MetricsReport:
    positives = qrels.positives_by_query()
    gains: dict[str, dict[str, int]] = {}
    for (q, d), lab in qrels.entries.items():
        gains.setdefault(q, {})[d] = lab
    report = MetricsReport()
    for ranking in rankings:
        pos = positives.get(ranking.qid, set())
        if not pos:
            report.excluded.append(ranking.qid)
            continue
        report.per_query[ranking.qid] = query_metrics(ranking, pos, gains.get(ranking.qid, {}))
    if report.per_query:
        qids = sorted(report.per_query)
        for name in HEADLINE + OPTIONAL:
            report.mean[name] = math.fsum(report.per_query[q][name] for q in qids) / len(qids)
    return report


def significance_test(per_query_a: Sequence[float], per_query_b: Sequence[float],
                      iterations: int = 10000, seed: int = 0) -> float:
    """Two-sided paired randomization (sign-flip) test on the mean difference.

    Returns ``(count + 1) / (iterations + 1)`` where ``count`` is the number
    of random sign assignments whose |mean difference| reaches the observed one.
    """
    a = np.asarray(per_query_a, dtype=np.float64)
    b = np.asarray(per_query_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"paired samples differ in length: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("no paired observations")
    diff = a - b
    observed = abs(diff.mean())
    tol = 1e-12 * max(1.0, observed)
    rng = stream(seed, "significance")
    count = 0
    chunk = 4096
    for start in range(0, iterations, chunk):
        n = min(chunk, iterations - start)
        signs = rng.integers(0, 2, size=(n, diff.size)) * 2 - 1
        permuted = np.abs((signs * diff).mean(axis=1))
        count += int(np.count_nonzero(permuted >= observed - tol))
    return (count + 1) / (iterations + 1)


def read_run(path: str | Path) -> list[RankedList]:
    """Read ``qid docid score`` lines (whitespace separated)."""
    scores: dict[str, dict[str, float]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 'qid docid score'")
            qid, docid, raw = parts
            try:
                score = float(raw)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric score {raw!r}") from None
            bucket = scores.setdefault(qid, {})
            if docid in bucket:
                raise DataError(f"{path}:{lineno}: duplicate doc {docid!r} for query {qid!r}")
            bucket[docid] = score
    return [RankedList.from_scores(q, s) for q, s in scores.items()]


def write_run(path: str | Path, rankings: Iterable[RankedList]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in rankings:
            for docid, score in r.items:
                fh.write(f"{r.qid}\t{docid}\t{score!r}\n")
