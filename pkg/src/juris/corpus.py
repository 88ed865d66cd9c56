"""Loaders for the corpus, query set and relevance judgments.

Corpus and queries are JSON-Lines, qrels are 3-column TSV without a header::

    corpus.jsonl   {"id": str, "text": str, "charges": [str], "elements": [str]}
    queries.jsonl  {"id": str, "text": str, "pool": [str]}
    qrels.tsv      qid<TAB>docid<TAB>label
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from juris.errors import DataError


def canonical(term: str) -> str:
    """NFC-normalize and trim a label string; the exact-match key for labels."""
    return unicodedata.normalize("NFC", term).strip()


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    charges: frozenset[str] = frozenset()
    elements: frozenset[str] = frozenset()

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "charges": sorted(self.charges),
            "elements": sorted(self.elements),
        }


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    pool: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {"id": self.id, "text": self.text, "pool": list(self.pool)}


@dataclass(frozen=True)
class QrelSet:
    entries: dict[tuple[str, str], int] = field(default_factory=dict)
    positive_threshold: int = 1

    def label(self, qid: str, docid: str) -> int:
        return self.entries.get((qid, docid), 0)

    def is_positive(self, qid: str, docid: str) -> bool:
        return self.label(qid, docid) >= self.positive_threshold

    def positives(self, qid: str) -> set[str]:
        return {d for (q, d), lab in self.entries.items()
                if q == qid and lab >= self.positive_threshold}

    def positives_by_query(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {}
        for (q, d), lab in self.entries.items():
            bucket = out.setdefault(q, set())
            if lab >= self.positive_threshold:
                bucket.add(d)
        return out

    def labels_for(self, qid: str) -> dict[str, int]:
        return {d: lab for (q, d), lab in self.entries.items() if q == qid}

    def with_threshold(self, threshold: int) -> "QrelSet":
        return QrelSet(dict(self.entries), threshold)


def _iter_json_lines(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _string_field(obj: dict, key: str, where: str, default: str | None = None) -> str:
    value = obj.get(key, default)
    if not isinstance(value, str):
        raise DataError(f"{where}: field {key!r} must be a string")
    return value


def _label_set(obj: dict, key: str, where: str) -> frozenset[str]:
    values = obj.get(key, [])
    if not isinstance(values, list) or not all(isinstance(v, str) for v in values):
        raise DataError(f"{where}: field {key!r} must be a list of strings")
    return frozenset(c for c in map(canonical, values) if c)


def load_corpus(path: str | Path) -> list[Document]:
    docs: list[Document] = []
    seen: set[str] = set()
    for lineno, obj in _iter_json_lines(path):
        where = f"{path}:{lineno}"
        doc_id = _string_field(obj, "id", where)
        if not doc_id:
            raise DataError(f"{where}: empty document id")
        if doc_id in seen:
            raise DataError(f"{where}: duplicate document id {doc_id!r}")
        seen.add(doc_id)
        docs.append(Document(
            id=doc_id,
            text=_string_field(obj, "text", where, default=""),
            charges=_label_set(obj, "charges", where),
            elements=_label_set(obj, "elements", where),
        ))
    return docs


def load_queries(path: str | Path) -> list[Query]:
    queries: list[Query] = []
    seen: set[str] = set()
    for lineno, obj in _iter_json_lines(path):
        where = f"{path}:{lineno}"
        qid = _string_field(obj, "id", where)
        if not qid:
            raise DataError(f"{where}: empty query id")
        if qid in seen:
            raise DataError(f"{where}: duplicate query id {qid!r}")
        seen.add(qid)
        pool = obj.get("pool", [])
        if not isinstance(pool, list) or not all(isinstance(p, str) for p in pool):
            raise DataError(f"{where}: field 'pool' must be a list of strings")
        if len(set(pool)) != len(pool):
            dup = next(p for i, p in enumerate(pool) if p in pool[:i])
            raise DataError(f"{where}: duplicate candidate {dup!r} in pool of {qid!r}")
        queries.append(Query(qid, _string_field(obj, "text", where, default=""), tuple(pool)))
    return queries


def load_qrels(path: str | Path, positive_threshold: int = 1) -> QrelSet:
    entries: dict[tuple[str, str], int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected qid<TAB>docid<TAB>label")
            qid, docid, raw = parts
            try:
                label = int(raw)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer label {raw!r}") from None
            if label < 0:
                raise DataError(f"{path}:{lineno}: negative label {label}")
            if (qid, docid) in entries:
                raise DataError(f"{path}:{lineno}: duplicate judgment for ({qid}, {docid})")
            entries[(qid, docid)] = label
    return QrelSet(entries, positive_threshold)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def dump_corpus(path: str | Path, docs: Iterable[Document]) -> None:
    write_jsonl(path, (d.to_json() for d in docs))


def dump_queries(path: str | Path, queries: Iterable[Query]) -> None:
    write_jsonl(path, (q.to_json() for q in queries))


def dump_qrels(path: str | Path, qrels: QrelSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for (qid, docid), label in qrels.entries.items():
            fh.write(f"{qid}\t{docid}\t{label}\n")
