"""Latent indicator inference: which charge a query describes, and its elements.

Two providers produce :class:`IndicatorResult`:

* :func:`infer` runs the built-in generator fitted by :func:`fit_generator`.
  In ``hierarchical`` mode the charge is decided first and the elements are
  drawn from that charge's element distribution; ``independent`` mode picks
  elements from the charge-agnostic marginal.
* :func:`load_indicators` ingests decoded outputs of an external generator
  (one JSON line per query with per-segment mean token log-probabilities).

Both pass their sets through :func:`juris.taxonomy.filter_valid`, so nothing
outside the taxonomy leaves this module.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from juris.corpus import Document, Query, canonical
from juris.errors import DataError
from juris.lexical import TokenizerConfig, tokenize
from juris.taxonomy import Taxonomy, filter_valid

log = logging.getLogger(__name__)

HIERARCHICAL = "hierarchical"
INDEPENDENT = "independent"
FILE_BACKED = "file-backed"
MODES = (HIERARCHICAL, INDEPENDENT)


@dataclass(frozen=True)
class IndicatorResult:
    charges: frozenset[str] = frozenset()
    elements: frozenset[str] = frozenset()
    charge_confidence: float = 0.0
    element_confidence: float = 0.0
    provenance: str = HIERARCHICAL

    def to_json(self, qid: str) -> dict:
        def as_logprob(p: float) -> float | None:
            return math.log(p) if p > 0 else None
        return {
            "qid": qid,
            "charges": sorted(self.charges),
            "elements": sorted(self.elements),
            "charge_logprob_mean": as_logprob(self.charge_confidence),
            "element_logprob_mean": as_logprob(self.element_confidence),
            "provenance": self.provenance,
        }


@dataclass
class GeneratorModel:
    """Multinomial charge classifier plus charge-conditional element tables.

    Token likelihoods are Laplace-smoothed over ``vocab`` plus one slot for
    unseen terms, so each charge's distribution sums to one.
    """

    mode: str
    charges: tuple[str, ...]
    charge_priors: dict[str, float]
    token_counts: dict[str, dict[str, int]]
    token_totals: dict[str, int]
    vocab: frozenset[str]
    element_given_charge: dict[str, dict[str, float]]
    element_marginal: dict[str, float]
    smoothing_alpha: float = 1.0
    top_k_elements: int = 6
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)

    def _denominator(self, charge: str) -> float:
        return self.token_totals[charge] + self.smoothing_alpha * (len(self.vocab) + 1)

    def charge_token_loglik(self, charge: str, term: str | None) -> float:
        """log P(term | charge); ``None`` or an out-of-vocabulary term gets the unseen slot."""
        count = self.token_counts[charge].get(term, 0) if term is not None else 0
        return math.log((count + self.smoothing_alpha) / self._denominator(charge))

    def unseen_loglik(self, charge: str) -> float:
        return self.charge_token_loglik(charge, None)

    def charge_log_scores(self, terms: Iterable[str]) -> dict[str, float]:
        counts = Counter(t for t in terms if t in self.vocab)
        scores = {}
        for charge in self.charges:
            s = self.charge_priors[charge]
            for term, n in sorted(counts.items()):
                s += n * self.charge_token_loglik(charge, term)
            scores[charge] = s
        return scores

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "charges": list(self.charges),
            "charge_priors": self.charge_priors,
            "token_counts": {c: dict(sorted(t.items())) for c, t in self.token_counts.items()},
            "token_totals": self.token_totals,
            "vocab": sorted(self.vocab),
            "element_given_charge": self.element_given_charge,
            "element_marginal": self.element_marginal,
            "smoothing_alpha": self.smoothing_alpha,
            "top_k_elements": self.top_k_elements,
            "tokenizer": {"mode": self.tokenizer.mode, "lowercase": self.tokenizer.lowercase},
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "GeneratorModel":
        return cls(
            mode=obj["mode"],
            charges=tuple(obj["charges"]),
            charge_priors={k: float(v) for k, v in obj["charge_priors"].items()},
            token_counts={c: {t: int(n) for t, n in d.items()} for c, d in obj["token_counts"].items()},
            token_totals={c: int(n) for c, n in obj["token_totals"].items()},
            vocab=frozenset(obj["vocab"]),
            element_given_charge={c: {e: float(w) for e, w in d.items()}
                                  for c, d in obj["element_given_charge"].items()},
            element_marginal={e: float(w) for e, w in obj["element_marginal"].items()},
            smoothing_alpha=float(obj["smoothing_alpha"]),
            top_k_elements=int(obj["top_k_elements"]),
            tokenizer=TokenizerConfig(**obj["tokenizer"]),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, ensure_ascii=False, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> "GeneratorModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _normalized(counts: Mapping[str, int]) -> dict[str, float]:
    total = sum(counts.values())
    return {k: counts[k] / total for k in sorted(counts)} if total else {}


def fit_generator(docs: Iterable[Document], tax: Taxonomy, mode: str = HIERARCHICAL,
                  smoothing_alpha: float = 1.0, top_k_elements: int = 6,
                  tokenizer: TokenizerConfig = TokenizerConfig()) -> GeneratorModel:
    if mode not in MODES:
        raise ValueError(f"unknown generator mode {mode!r}")
    if smoothing_alpha <= 0:
        raise ValueError("smoothing_alpha must be positive")
    if top_k_elements < 1:
        raise ValueError("top_k_elements must be >= 1")

    doc_counts: Counter[str] = Counter()
    token_counts: dict[str, Counter[str]] = {}
    pair_counts: dict[str, Counter[str]] = {}
    element_counts: Counter[str] = Counter()
    vocab: set[str] = set()

    for doc in docs:
        if not doc.charges:
            continue
        unknown = sorted(doc.charges - tax.charges)
        if unknown:
            raise DataError(f"document {doc.id!r} has charge {unknown[0]!r} outside the taxonomy")
        terms = Counter(tokenize(doc.text, tokenizer))
        vocab.update(terms)
        element_counts.update(doc.elements)
        for charge in doc.charges:
            doc_counts[charge] += 1
            token_counts.setdefault(charge, Counter()).update(terms)
            pair_counts.setdefault(charge, Counter()).update(doc.elements)

    if not doc_counts:
        raise DataError("no labeled documents to fit the generator on")

    charges = tuple(sorted(doc_counts))
    total_docs = sum(doc_counts.values())
    return GeneratorModel(
        mode=mode,
        charges=charges,
        charge_priors={c: math.log(doc_counts[c] / total_docs) for c in charges},
        token_counts={c: dict(sorted(token_counts[c].items())) for c in charges},
        token_totals={c: sum(token_counts[c].values()) for c in charges},
        vocab=frozenset(vocab),
        element_given_charge={c: _normalized(pair_counts[c]) for c in charges},
        element_marginal=_normalized(element_counts),
        smoothing_alpha=smoothing_alpha,
        top_k_elements=top_k_elements,
        tokenizer=tokenizer,
    )


def posterior(log_scores: Mapping[str, float]) -> dict[str, float]:
    """Normalize unnormalized log scores into probabilities (log-sum-exp)."""
    peak = max(log_scores.values())
    weights = {c: math.exp(s - peak) for c, s in log_scores.items()}
    total = math.fsum(weights.values())
    return {c: w / total for c, w in weights.items()}


def _top_elements(weights: Mapping[str, float], k: int) -> list[tuple[str, float]]:
    ranked = sorted(((e, w) for e, w in weights.items() if w > 0), key=lambda ew: (-ew[1], ew[0]))
    return ranked[:k]


def infer(model: GeneratorModel, query: Query, tax: Taxonomy,
          cfg: TokenizerConfig | None = None) -> IndicatorResult:
    terms = tokenize(query.text, cfg or model.tokenizer)
    if not terms:
        return IndicatorResult(provenance=model.mode)

    post = posterior(model.charge_log_scores(terms))
    charge = min(post, key=lambda c: (-post[c], c))

    table = (model.element_given_charge.get(charge, {}) if model.mode == HIERARCHICAL
             else model.element_marginal)
    picked = dict(_top_elements(table, model.top_k_elements))

    charges, elements = filter_valid({charge}, picked, tax)
    charge_conf = post[charge] if charges else 0.0
    if elements:
        logs = [math.log(picked[e]) for e in sorted(elements)]
        element_conf = math.exp(math.fsum(logs) / len(logs))
    else:
        element_conf = 0.0
    return IndicatorResult(charges, elements, min(charge_conf, 1.0), min(element_conf, 1.0),
                           provenance=model.mode)


def infer_all(model: GeneratorModel, queries: Iterable[Query], tax: Taxonomy) -> dict[str, IndicatorResult]:
    return {q.id: infer(model, q, tax) for q in queries}


def _confidence(obj: dict, key: str, has_terms: bool, where: str) -> float:
    value = obj.get(key)
    if value is None:
        if has_terms:
            raise DataError(f"{where}: missing {key!r}")
        return 0.0
    if isinstance(value, bool) or not isinstance(value, (int, float)) or math.isnan(value):
        raise DataError(f"{where}: {key!r} must be a number")
    if value > 0:
        raise DataError(f"{where}: {key!r} = {value} is a positive log-probability")
    return math.exp(value)


def _strings(obj: dict, key: str, where: str) -> list[str]:
    values = obj.get(key, [])
    if not isinstance(values, list) or not all(isinstance(v, str) for v in values):
        raise DataError(f"{where}: {key!r} must be a list of strings")
    return values


def load_indicators(path: str | Path, tax: Taxonomy) -> dict[str, IndicatorResult]:
    """Read externally generated indicators; confidence = exp(mean token log-prob)."""
    out: dict[str, IndicatorResult] = {}
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise DataError(f"{where}: expected a JSON object")
            qid = obj.get("qid")
            if not isinstance(qid, str) or not qid:
                skipped += 1
                continue
            raw_c = _strings(obj, "charges", where)
            raw_e = _strings(obj, "elements", where)
            c_conf = _confidence(obj, "charge_logprob_mean", bool(raw_c), where)
            e_conf = _confidence(obj, "element_logprob_mean", bool(raw_e), where)
            charges, elements = filter_valid(raw_c, raw_e, tax)
            out[qid] = IndicatorResult(charges, elements, c_conf, e_conf, FILE_BACKED)
    if skipped:
        log.warning("%s: skipped %d line(s) without a qid", path, skipped)
    return out


def dump_indicators(path: str | Path, indicators: Mapping[str, IndicatorResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid in indicators:
            fh.write(json.dumps(indicators[qid].to_json(qid), ensure_ascii=False, sort_keys=True) + "\n")


def element_f1(predicted: Iterable[str], gold: Iterable[str]) -> float:
    pred, ref = set(predicted), {canonical(g) for g in gold}
    if not pred and not ref:
        return 1.0
    hit = len(pred & ref)
    if hit == 0:
        return 0.0
    p, r = hit / len(pred), hit / len(ref)
    return 2 * p * r / (p + r)
