"""Definitional re-implementations used as test oracles."""

from __future__ import annotations


def oracle_metrics(ranking: list[str], positives: set[str]) -> dict[str, float]:
    rel = [1 if d in positives else 0 for d in ranking]
    precisions = [sum(rel[:i + 1]) / (i + 1) for i in range(len(rel)) if rel[i]]
    first = next((i + 1 for i, r in enumerate(rel) if r), None)
    return {
        "MAP": sum(precisions) / len(positives),
        "P@3": sum(rel[:3]) / 3,
        "R@3": sum(rel[:3]) / len(positives),
        "R@5": sum(rel[:5]) / len(positives),
        "Hits@3": float(any(rel[:3])),
        "Hits@5": float(any(rel[:5])),
        "MRR@5": 1.0 / first if first is not None and first <= 5 else 0.0,
    }


def random_instance(rng, max_docs: int = 12):
    """A random (ranking, positives) pair; positives may include unranked docs."""
    n = int(rng.integers(1, max_docs + 1))
    universe = [f"d{i}" for i in range(n + 3)]
    ranking = [str(d) for d in rng.permutation(universe)[:n]]
    k = int(rng.integers(1, len(universe) + 1))
    positives = {str(d) for d in rng.choice(universe, size=k, replace=False)}
    return ranking, positives
