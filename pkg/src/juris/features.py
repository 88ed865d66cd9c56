"""The five-dimensional evidence vector for a (query, candidate) pair."""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from juris.corpus import Document
from juris.errors import DataError
from juris.inference import IndicatorResult

FEATURE_ORDER = ("v1", "v2", "v3", "v4", "v5")
FEATURE_LABELS = {
    "v1": "Conf_Charge",
    "v2": "Conf_Element",
    "v3": "Hit_Charge",
    "v4": "Hit_Element_Ratio",
    "v5": "Norm_BM25",
}
DEFAULT_EPSILON = 1e-9


@dataclass(frozen=True)
class FeatureVector:
    v1: float = 0.0  # charge confidence
    v2: float = 0.0  # element confidence
    v3: float = 0.0  # charge hit, 0 or 1
    v4: float = 0.0  # element support ratio
    v5: float = 0.0  # per-query normalized BM25

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "FeatureVector":
        return cls(*(float(x) for x in values))


def charge_hit(query_charges: Iterable[str], doc_charges: Iterable[str]) -> int:
    return int(not set(query_charges).isdisjoint(doc_charges))


def element_support(query_elements: Iterable[str], doc_elements: Iterable[str],
                    epsilon: float = DEFAULT_EPSILON) -> float:
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    q = set(query_elements)
    return len(q.intersection(doc_elements)) / (len(q) + epsilon)


def assemble_features(indicator: IndicatorResult, doc: Document, norm_bm25: float,
                      epsilon: float = DEFAULT_EPSILON) -> FeatureVector:
    if not 0.0 <= norm_bm25 <= 1.0:
        raise DataError(f"normalized BM25 {norm_bm25!r} for {doc.id!r} is outside [0, 1]")
    return FeatureVector(
        indicator.charge_confidence,
        indicator.element_confidence,
        float(charge_hit(indicator.charges, doc.charges)),
        element_support(indicator.elements, doc.elements, epsilon),
        norm_bm25,
    )


@dataclass(frozen=True)
class FeatureRow:
    qid: str
    docid: str
    features: FeatureVector
    label: int = 0


def write_features(path: str | Path, rows: Iterable[FeatureRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, delimiter="\t", lineterminator="\n")
        out.writerow(["qid", "docid", *FEATURE_ORDER, "label"])
        for r in rows:
            out.writerow([r.qid, r.docid, *(repr(x) for x in astuple(r.features)), r.label])


def read_features(path: str | Path) -> list[FeatureRow]:
    return list(_iter_features(path))


def _iter_features(path: str | Path) -> Iterator[FeatureRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header != ["qid", "docid", *FEATURE_ORDER, "label"]:
            raise DataError(f"{path}:1: unexpected header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 8:
                raise DataError(f"{path}:{lineno}: expected 8 columns, got {len(row)}")
            try:
                values = [float(x) for x in row[2:7]]
                label = int(row[7])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric feature or label") from None
            yield FeatureRow(row[0], row[1], FeatureVector(*values), label)
