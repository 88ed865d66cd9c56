"""Closed legal vocabularies and the validity filter for inferred indicators."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from juris.corpus import canonical
from juris.errors import DataError


@dataclass(frozen=True)
class Taxonomy:
    """Canonical charge and element vocabularies.

    ``element_index`` optionally maps each charge to the elements admissible
    under it. When absent, element validity does not depend on the charge.
    """

    charges: frozenset[str]
    elements: frozenset[str]
    element_index: dict[str, frozenset[str]] | None = None

    def __post_init__(self):
        if not self.charges:
            raise DataError("taxonomy has no charges")
        if self.element_index is not None:
            for charge, admissible in self.element_index.items():
                if charge not in self.charges:
                    raise DataError(f"element index names unknown charge {charge!r}")
                if not admissible <= self.elements:
                    raise DataError(f"element index for {charge!r} has unknown elements")

    @classmethod
    def build(cls, charges: Iterable[str], elements: Iterable[str] = (),
              element_index: dict[str, Iterable[str]] | None = None) -> "Taxonomy":
        charge_set = frozenset(c for c in map(canonical, charges) if c)
        element_set = frozenset(e for e in map(canonical, elements) if e)
        index = None
        if element_index is not None:
            index = {}
            for charge, elems in element_index.items():
                key = canonical(charge)
                index[key] = index.get(key, frozenset()) | frozenset(
                    e for e in map(canonical, elems) if e)
            element_set = element_set.union(*index.values())
        return cls(charge_set, element_set, index)

    def to_json(self) -> dict:
        if self.element_index is None:
            return {"charges": sorted(self.charges), "elements": sorted(self.elements)}
        out: dict = {"charges": sorted(self.charges),
                     "elements": {c: sorted(e) for c, e in sorted(self.element_index.items())}}
        loose = self.elements.difference(*self.element_index.values())
        if loose:
            out["unindexed_elements"] = sorted(loose)
        return out


def load_taxonomy(path: str | Path) -> Taxonomy:
    """Read ``taxonomy.json``.

    ``elements`` is either a flat list or an object mapping charge -> list.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed JSON at line {exc.lineno}") from None
    if not isinstance(obj, dict) or not isinstance(obj.get("charges"), list):
        raise DataError(f"{path}: expected an object with a 'charges' array")
    elements = obj.get("elements", [])
    if isinstance(elements, list):
        return Taxonomy.build(obj["charges"], elements)
    if isinstance(elements, dict):
        return Taxonomy.build(obj["charges"], obj.get("unindexed_elements", []), elements)
    raise DataError(f"{path}: 'elements' must be a list or an object")


def filter_valid(raw_charges: Iterable[str], raw_elements: Iterable[str],
                 tax: Taxonomy) -> tuple[frozenset[str], frozenset[str]]:
    """Drop every charge/element that is not an exact taxonomy member.

    With an element index, surviving elements must also be admissible under
    at least one surviving charge.
    """
    charges = frozenset(c for c in map(canonical, raw_charges) if c in tax.charges)
    elements = frozenset(e for e in map(canonical, raw_elements) if e in tax.elements)
    if tax.element_index is not None:
        admissible = frozenset().union(*(tax.element_index.get(c, frozenset()) for c in charges))
        elements &= admissible
    return charges, elements
