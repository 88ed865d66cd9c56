"""Offline teacher distillation of silver-standard element labels.

There is no network client. Prompts are rendered to ``prompts/<docid>.txt``;
whoever plays the teacher (a script, a person, any LLM) writes replies to
``responses/<docid>.txt``; :func:`ingest` parses and cleans them into a
corpus file with element labels filled in.

The cleaning rules are a concrete, configurable stand-in for qualitative
data-quality filtering:

* ``count-bounds``: element count outside ``[min_elements, max_elements]``
* ``sentencing-leakage``: an element mentions a sentencing/procedure term
* ``charge-repeat``: an element is just the charge name
* ``duplicate-id``: a second record for an already-kept document
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence
from urllib.parse import quote, unquote

from juris.corpus import Document, canonical
from juris.taxonomy import Taxonomy

OK = "ok"
PARSE_ERROR = "parse_error"
CLEANED_OUT = "cleaned_out"

CHARGE_SEPARATOR = "; "
SCHEMA_LINE = '{"legal_elements": ["Element 1", "Element 2", ...]}'

PROMPT_TEMPLATE = """\
[System role]
You are an expert analyst of criminal judgments. Identify the legal elements that establish the given charge in the case below.

[Input]
- Charge: {charge}
- Case text: {text}

[Constraints]
1. Return between 4 and 6 legal elements that support the conviction.
2. Phrase every element in standard legal terminology, not in everyday language.
3. Never include sentencing outcomes or procedural aftermath (prison terms, detention, fines, compensation amounts) or a bare statement of conviction.
4. Do not restate the charge name, and keep the elements free of overlap.

[Output]
Reply with one JSON object and nothing else:
{schema}
"""


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class DistillRecord:
    doc_id: str
    grounded_charge: str
    raw_response: str
    parsed_elements: tuple[str, ...] = ()
    status: str = OK
    rejection_reason: str | None = None

    def to_json(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "grounded_charge": self.grounded_charge,
            "parsed_elements": list(self.parsed_elements),
            "status": self.status,
            "rejection_reason": self.rejection_reason,
        }


def grounded_charge(doc: Document) -> str:
    return CHARGE_SEPARATOR.join(sorted(doc.charges))


def render_prompt(doc: Document, charge: str, max_chars: int = 2000) -> str:
    if not charge:
        raise ValueError("charge must be nonempty")
    return PROMPT_TEMPLATE.format(charge=charge, text=doc.text[:max_chars], schema=SCHEMA_LINE)


def parse_response(raw: str) -> list[str]:
    """Pull ``legal_elements`` out of the first JSON object embedded in ``raw``."""
    decoder = json.JSONDecoder()
    obj = None
    start = raw.find("{")
    while start != -1:
        try:
            candidate, _ = decoder.raw_decode(raw, start)
        except json.JSONDecodeError:
            start = raw.find("{", start + 1)
            continue
        if isinstance(candidate, dict):
            obj = candidate
            break
        start = raw.find("{", start + 1)
    if obj is None:
        raise ParseError("no JSON object in response")
    if "legal_elements" not in obj:
        raise ParseError("missing 'legal_elements'")
    items = obj["legal_elements"]
    if not isinstance(items, list) or not all(isinstance(x, str) for x in items):
        raise ParseError("'legal_elements' must be a list of strings")
    seen: dict[str, None] = {}
    for item in items:
        term = canonical(item)
        if term:
            seen.setdefault(term, None)
    if not seen:
        raise ParseError("'legal_elements' is empty")
    return list(seen)


def make_record(doc_id: str, charge: str, raw: str) -> DistillRecord:
    try:
        elements = parse_response(raw)
    except ParseError as exc:
        return DistillRecord(doc_id, charge, raw, (), PARSE_ERROR, str(exc))
    return DistillRecord(doc_id, charge, raw, tuple(elements))


def load_forbidden_terms(path: str | Path | None = None) -> list[str]:
    if path is None:
        text = resources.files("juris").joinpath("data/forbidden_terms.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


def _rejection(rec: DistillRecord, forbidden: Sequence[str], bounds: tuple[int, int]) -> str | None:
    lo, hi = bounds
    if not lo <= len(rec.parsed_elements) <= hi:
        return "count-bounds"
    lowered = [e.casefold() for e in rec.parsed_elements]
    if any(term in e for e in lowered for term in forbidden):
        return "sentencing-leakage"
    names = {rec.grounded_charge.casefold()}
    names.update(c.casefold() for c in rec.grounded_charge.split(CHARGE_SEPARATOR))
    if any(e in names for e in lowered):
        return "charge-repeat"
    return None


def clean_records(records: Iterable[DistillRecord], tax: Taxonomy | None = None,
                  forbidden_terms: Sequence[str] | None = None,
                  bounds: tuple[int, int] = (2, 10)) -> tuple[list[DistillRecord], list[DistillRecord]]:
    """Split records into (kept, rejected); every rejection carries a reason.

    With a taxonomy, records whose grounded charges are not all taxonomy
    charges are rejected as ``unknown-charge``.
    """
    forbidden = [t.casefold() for t in (load_forbidden_terms() if forbidden_terms is None
                                        else forbidden_terms)]
    kept: list[DistillRecord] = []
    rejected: list[DistillRecord] = []
    kept_ids: set[str] = set()
    for rec in records:
        if rec.status == PARSE_ERROR:
            rejected.append(rec)
            continue
        if rec.doc_id in kept_ids:
            reason = "duplicate-id"
        elif tax is not None and not set(rec.grounded_charge.split(CHARGE_SEPARATOR)) <= tax.charges:
            reason = "unknown-charge"
        else:
            reason = _rejection(rec, forbidden, bounds)
        if reason is None:
            kept_ids.add(rec.doc_id)
            kept.append(replace(rec, status=OK, rejection_reason=None))
        else:
            rejected.append(replace(rec, status=CLEANED_OUT, rejection_reason=reason))
    return kept, rejected


def prompt_filename(doc_id: str) -> str:
    return quote(doc_id, safe="") + ".txt"


def doc_id_from_filename(name: str) -> str:
    return unquote(name[:-4] if name.endswith(".txt") else name)


def render_all(docs: Iterable[Document], max_chars: int = 2000) -> dict[str, str]:
    """Map prompt filename -> prompt text for every document with a charge."""
    return {prompt_filename(d.id): render_prompt(d, grounded_charge(d), max_chars)
            for d in docs if d.charges}


def read_responses(directory: str | Path, docs: Iterable[Document]) -> list[DistillRecord]:
    by_id = {d.id: d for d in docs}
    records = []
    for path in sorted(Path(directory).glob("*.txt")):
        doc_id = doc_id_from_filename(path.name)
        doc = by_id.get(doc_id)
        if doc is None:
            continue
        records.append(make_record(doc_id, grounded_charge(doc), path.read_text("utf-8")))
    records.sort(key=lambda r: r.doc_id)
    return records


def silver_documents(kept: Iterable[DistillRecord], docs: Iterable[Document]) -> list[Document]:
    """Attach kept element lists to their documents (corpus order)."""
    elements = {r.doc_id: frozenset(r.parsed_elements) for r in kept}
    return [replace(d, elements=elements[d.id]) for d in docs if d.id in elements]
