"""Planted synthetic legal corpora for controlled experiments.

Each query is built around a charge and a "fact cluster" (names, places,
objects). Its judged pool holds:

* positives (label 3): same charge, same facts;
* charge-mismatched hard negatives (label 0): other charge, *more* shared
  fact words than the positives, so BM25 prefers them;
* same-charge negatives (label 1): right charge, unrelated facts;
* random negatives (label 0).

Charge frequencies follow a Zipf-like long tail and each charge owns a
skewed element distribution, so element sets are strongly
charge-conditional.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from juris.corpus import Document, QrelSet, Query
from juris.rng import stream
from juris.taxonomy import Taxonomy

CHARGE_NAMES = (
    "theft", "fraud", "robbery", "embezzlement", "intentional injury",
    "dangerous driving", "bribery", "drug trafficking", "extortion",
    "arson", "illegal business operation", "traffic accident",
)


@dataclass(frozen=True)
class SyntheticConfig:
    num_charges: int = 6
    num_queries: int = 100
    num_fact_clusters: int = 60
    charge_vocab: int = 15
    fact_vocab: int = 8
    filler_vocab: int = 300
    elements_per_charge: int = 10
    element_decay: float = 0.75
    positives: int = 3
    hard_negatives: int = 5
    same_charge_negatives: int = 5
    random_negatives: int = 5
    background_docs: int = 120
    doc_charge_words: int = 6
    doc_fact_words: int = 7
    hard_negative_fact_words: int = 10
    doc_filler_words: int = 25
    query_charge_words: int = 4
    query_fact_words: int = 5
    query_filler_words: int = 12
    query_noise: float = 0.2


@dataclass
class SyntheticData:
    docs: list[Document]
    queries: list[Query]
    qrels: QrelSet
    taxonomy: Taxonomy
    gold_charges: dict[str, str] = field(default_factory=dict)
    gold_elements: dict[str, frozenset[str]] = field(default_factory=dict)


def charge_names(n: int) -> list[str]:
    return [CHARGE_NAMES[i] if i < len(CHARGE_NAMES) else f"charge {i}" for i in range(n)]


def generate(cfg: SyntheticConfig = SyntheticConfig(), seed: int = 0) -> SyntheticData:
    rng = stream(seed, "synthetic")
    charges = charge_names(cfg.num_charges)
    charge_words = {c: [f"c{i}w{j}" for j in range(cfg.charge_vocab)] for i, c in enumerate(charges)}
    fact_words = [[f"f{k}w{j}" for j in range(cfg.fact_vocab)] for k in range(cfg.num_fact_clusters)]
    filler = [f"g{j}" for j in range(cfg.filler_vocab)]
    elements = {c: [f"{c} element {j:02d}" for j in range(cfg.elements_per_charge)] for c in charges}
    weights = cfg.element_decay ** np.arange(cfg.elements_per_charge)
    weights = weights / weights.sum()
    popularity = 1.0 / np.arange(1, cfg.num_charges + 1)
    popularity = popularity / popularity.sum()

    def pick(words, n):
        return list(rng.choice(words, size=n, replace=True))

    def sample_elements(charge) -> frozenset[str]:
        k = int(rng.integers(4, 7))
        idx = rng.choice(cfg.elements_per_charge, size=k, replace=False, p=weights)
        return frozenset(elements[charge][i] for i in idx)

    docs: list[Document] = []
    # ids are a random permutation so tie-breaking by id carries no signal
    capacity = cfg.background_docs + cfg.num_queries * (
        cfg.positives + cfg.hard_negatives + cfg.same_charge_negatives + cfg.random_negatives)
    id_order = rng.permutation(capacity)

    def make_doc(charge: str, fact: int, n_fact: int) -> str:
        tokens = (pick(charge_words[charge], cfg.doc_charge_words) + pick(fact_words[fact], n_fact)
                  + pick(filler, cfg.doc_filler_words))
        rng.shuffle(tokens)
        doc = Document(f"d{id_order[len(docs)]:06d}", " ".join(tokens), frozenset({charge}), sample_elements(charge))
        docs.append(doc)
        return doc.id

    def other_charge(charge: str) -> str:
        rest = [c for c in charges if c != charge]
        return rest[int(rng.integers(len(rest)))]

    def other_fact(fact: int) -> int:
        k = int(rng.integers(cfg.num_fact_clusters - 1))
        return k if k < fact else k + 1

    for _ in range(cfg.background_docs):
        c = charges[int(rng.choice(cfg.num_charges, p=popularity))]
        make_doc(c, int(rng.integers(cfg.num_fact_clusters)), cfg.doc_fact_words)

    queries: list[Query] = []
    entries: dict[tuple[str, str], int] = {}
    gold_c: dict[str, str] = {}
    gold_e: dict[str, frozenset[str]] = {}
    for qn in range(cfg.num_queries):
        qid = f"q{qn:04d}"
        charge = charges[int(rng.choice(cfg.num_charges, p=popularity))]
        fact = int(rng.integers(cfg.num_fact_clusters))

        pool: list[tuple[str, int]] = []
        for _ in range(cfg.positives):
            pool.append((make_doc(charge, fact, cfg.doc_fact_words), 3))
        for _ in range(cfg.hard_negatives):
            pool.append((make_doc(other_charge(charge), fact, cfg.hard_negative_fact_words), 0))
        for _ in range(cfg.same_charge_negatives):
            pool.append((make_doc(charge, other_fact(fact), cfg.doc_fact_words), 1))
        for _ in range(cfg.random_negatives):
            c = charges[int(rng.integers(cfg.num_charges))]
            pool.append((make_doc(c, other_fact(fact), cfg.doc_fact_words), 0))
        order = rng.permutation(len(pool))
        pool = [pool[i] for i in order]
        for doc_id, label in pool:
            entries[(qid, doc_id)] = label

        words = []
        for _ in range(cfg.query_charge_words):
            source = other_charge(charge) if rng.random() < cfg.query_noise else charge
            words += pick(charge_words[source], 1)
        words += pick(fact_words[fact], cfg.query_fact_words) + pick(filler, cfg.query_filler_words)
        rng.shuffle(words)
        queries.append(Query(qid, " ".join(words), tuple(d for d, _ in pool)))
        gold_c[qid] = charge
        gold_e[qid] = sample_elements(charge)

    docs.sort(key=lambda d: d.id)
    taxonomy = Taxonomy.build(charges, [e for c in charges for e in elements[c]])
    return SyntheticData(docs, queries, QrelSet(entries, positive_threshold=3), taxonomy, gold_c, gold_e)
