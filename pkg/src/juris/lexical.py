"""Tokenization, a BM25 inverted index, and per-query score normalization."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from juris.corpus import Document
from juris.errors import DataError

WORDS = "unicode-words"
CJK = "cjk-bigram-hybrid"
TOKENIZER_ALIASES = {"words": WORDS, "cjk": CJK, WORDS: WORDS, CJK: CJK}

_CJK_CLASS = (
    "\u3400-\u4dbf\u4e00-\u9fff\uf900-\ufaff"  # Han
    "\u3040-\u30ff"  # kana
    "\uac00-\ud7af"  # hangul
)
_CJK_RUN = re.compile(f"[{_CJK_CLASS}]+")
_WORD = re.compile(r"\w+")
_WORD_NO_CJK = re.compile(f"(?:(?![{_CJK_CLASS}])\\w)+")


@dataclass(frozen=True)
class TokenizerConfig:
    mode: str = WORDS
    lowercase: bool = True

    def __post_init__(self):
        if self.mode not in (WORDS, CJK):
            raise ValueError(f"unknown tokenizer mode {self.mode!r}")

    @classmethod
    def from_name(cls, name: str, lowercase: bool = True) -> "TokenizerConfig":
        try:
            return cls(TOKENIZER_ALIASES[name], lowercase)
        except KeyError:
            raise ValueError(f"unknown tokenizer {name!r}") from None


def tokenize(text: str, cfg: TokenizerConfig = TokenizerConfig()) -> list[str]:
    if cfg.lowercase:
        text = text.lower()
    if cfg.mode == WORDS:
        return _WORD.findall(text)

    tokens: list[str] = []
    pos = 0
    for run in _CJK_RUN.finditer(text):
        tokens.extend(_WORD_NO_CJK.findall(text, pos, run.start()))
        chars = run.group()
        if len(chars) == 1:
            tokens.append(chars)
        else:
            tokens.extend(chars[i:i + 2] for i in range(len(chars) - 1))
        pos = run.end()
    tokens.extend(_WORD_NO_CJK.findall(text, pos))
    return tokens


@dataclass
class InvertedIndex:
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    avg_doc_length: float
    num_docs: int
    k1: float = 1.2
    b: float = 0.75
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    _doc_tf: dict[str, dict[str, int]] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self._doc_tf:
            for term, plist in self.postings.items():
                for doc_id, tf in plist:
                    self._doc_tf.setdefault(doc_id, {})[term] = tf

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        n = self.df(term)
        return math.log(1.0 + (self.num_docs - n + 0.5) / (n + 0.5))

    def save(self, path: str | Path) -> None:
        obj = {
            "k1": self.k1, "b": self.b,
            "tokenizer": {"mode": self.tokenizer.mode, "lowercase": self.tokenizer.lowercase},
            "doc_lengths": dict(sorted(self.doc_lengths.items())),
            "postings": {t: [[d, tf] for d, tf in p] for t, p in sorted(self.postings.items())},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path: str | Path) -> "InvertedIndex":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        lengths = {d: int(n) for d, n in obj["doc_lengths"].items()}
        return cls(
            postings={t: [(d, int(tf)) for d, tf in p] for t, p in obj["postings"].items()},
            doc_lengths=lengths,
            avg_doc_length=sum(lengths.values()) / len(lengths),
            num_docs=len(lengths),
            k1=float(obj["k1"]), b=float(obj["b"]),
            tokenizer=TokenizerConfig(**obj["tokenizer"]),
        )


def build_index(docs: Iterable[Document], cfg: TokenizerConfig = TokenizerConfig(),
                k1: float = 1.2, b: float = 0.75) -> InvertedIndex:
    lengths: dict[str, int] = {}
    postings: dict[str, list[tuple[str, int]]] = {}
    for doc in docs:
        if doc.id in lengths:
            raise DataError(f"duplicate document id {doc.id!r}")
        terms = tokenize(doc.text, cfg)
        lengths[doc.id] = len(terms)
        for term, tf in Counter(terms).items():
            postings.setdefault(term, []).append((doc.id, tf))
    if not lengths:
        raise DataError("cannot index an empty corpus")
    for plist in postings.values():
        plist.sort()
    return InvertedIndex(
        postings=postings,
        doc_lengths=lengths,
        avg_doc_length=sum(lengths.values()) / len(lengths),
        num_docs=len(lengths),
        k1=k1, b=b, tokenizer=cfg,
    )


def _length_norm(index: InvertedIndex, doc_id: str) -> float:
    if index.avg_doc_length == 0:
        return index.k1
    ratio = index.doc_lengths[doc_id] / index.avg_doc_length
    return index.k1 * (1.0 - index.b + index.b * ratio)


def bm25_score(index: InvertedIndex, query_terms: Sequence[str], doc: str) -> float:
    """Okapi BM25 over the unique query terms (query-side tf is 1)."""
    if doc not in index.doc_lengths:
        raise DataError(f"document {doc!r} is not in the index")
    tfs = index._doc_tf.get(doc, {})
    norm = _length_norm(index, doc)
    score = 0.0
    for term in sorted(set(query_terms)):
        tf = tfs.get(term, 0)
        if tf:
            score += index.idf(term) * tf * (index.k1 + 1.0) / (tf + norm)
    return score


def score_pool(index: InvertedIndex, query_terms: Sequence[str],
               pool: Iterable[str]) -> dict[str, float]:
    return {d: bm25_score(index, query_terms, d) for d in pool}


def top_k(index: InvertedIndex, query_terms: Sequence[str], k: int) -> list[tuple[str, float]]:
    """Corpus-wide retrieval via the postings; ties broken by doc id."""
    acc: dict[str, float] = {}
    for term in sorted(set(query_terms)):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for doc_id, tf in plist:
            norm = _length_norm(index, doc_id)
            acc[doc_id] = acc.get(doc_id, 0.0) + idf * tf * (index.k1 + 1.0) / (tf + norm)
    ranked = sorted(acc.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


def normalize_per_query(scores: Mapping[str, float]) -> dict[str, float]:
    """Divide every score by the pool maximum; an all-zero pool stays all-zero."""
    if not scores:
        raise ValueError("cannot normalize an empty candidate pool")
    peak = max(scores.values())
    if peak <= 0.0:
        return {d: 0.0 for d in scores}
    return {d: s / peak for d, s in scores.items()}
