"""The nine labeling functions: concept occurrence plus eight dictionary
variants.

Dictionary variants derive their elements from the concept's name and
synonyms through a normalization chain: verbatim (NE/SE), lowercased
(NL/SL), lowercased with punctuation stripped (NNP/SNP), and split into
single tokens (NT/ST). Exact variants match the raw article text; all
others match the lowercased text. Concept occurrence (CO) ignores the text
entirely and reads the pre-extracted ``occurrences`` of a document.

``apply_lf`` scans naively, element by element; ``build_matcher`` compiles
many dictionaries into one automaton with identical results.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

from . import matcher as _matcher
from .corpus import Document
from .textutil import lowercase, occurs_at_token_boundary, strip_punctuation, unique_tokens
from .thesaurus import Thesaurus, UseCase

LF_IDS = ("CO", "NE", "SE", "NL", "SL", "NNP", "SNP", "NT", "ST")
DICTIONARY_LF_IDS = LF_IDS[1:]
# Exact variants match the raw text; every other dictionary variant matches
# the lowercased text.
_RAW_TEXT_LFS = ("NE", "SE")


def validate_lf(lf: str) -> str:
    if lf not in LF_IDS:
        raise ValueError(f"unknown labeling function {lf!r}")
    return lf


@dataclass(frozen=True)
class Dictionary:
    """Normalized dictionary elements for one (use case, labeling function)."""

    label: str  # fine_ui the elements vote for
    lf: str
    elements: tuple[str, ...]

    @property
    def matches_raw_text(self) -> bool:
        return self.lf in _RAW_TEXT_LFS


@dataclass(frozen=True)
class ConceptOccurrence:
    """Vote source for CO: present iff the cui was recognized in the text."""

    label: str
    cui: str


@dataclass(frozen=True, order=True)
class Vote:
    pmid: str
    label: str
    lf: str
    value: int


def _dedup(elements: Iterable[str]) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for el in elements:
        if el:
            seen.setdefault(el)
    return tuple(seen)


def build_dictionary(use_case: UseCase, thesaurus: Thesaurus, lf: str) -> Dictionary:
    """Build the element list for one dictionary-based labeling function.

    The use case's fine descriptor must carry exactly one concept; its first
    term is the name, the rest are synonyms.
    """
    validate_lf(lf)
    if lf == "CO":
        raise ValueError("CO is not dictionary-based; it reads document occurrences")
    descriptor = thesaurus.get(use_case.fine_ui)
    if len(descriptor.concepts) != 1:
        raise ValueError(f"use case {use_case.fine_ui!r} must have exactly one concept")
    concept = descriptor.concepts[0]
    name = concept.name
    synonyms = list(concept.synonyms)

    if lf == "NE":
        elements = [name]
    elif lf == "SE":
        elements = synonyms
    elif lf == "NL":
        elements = [lowercase(name)]
    elif lf == "SL":
        elements = [lowercase(t) for t in synonyms]
    elif lf == "NNP":
        elements = [strip_punctuation(lowercase(name))]
    elif lf == "SNP":
        elements = [strip_punctuation(lowercase(t)) for t in synonyms]
    elif lf == "NT":
        elements = unique_tokens(lowercase(name))
    else:  # ST
        elements = []
        for t in synonyms:
            elements.extend(unique_tokens(lowercase(t)))
    return Dictionary(label=use_case.fine_ui, lf=lf, elements=_dedup(elements))


def build_source(
    use_case: UseCase, thesaurus: Thesaurus, lf: str
) -> Dictionary | ConceptOccurrence:
    """Vote source for any of the nine labeling functions."""
    if lf == "CO":
        return ConceptOccurrence(label=use_case.fine_ui, cui=use_case.concept_cui)
    return build_dictionary(use_case, thesaurus, lf)


def _dictionary_hit(doc: Document, dictionary: Dictionary) -> bool:
    if dictionary.matches_raw_text:
        fields = (doc.title, doc.abstract)
    else:
        fields = (lowercase(doc.title), lowercase(doc.abstract))
    return any(
        occurs_at_token_boundary(field, element)
        for field in fields
        for element in dictionary.elements
    )


def apply_lf(
    documents: Iterable[Document], source: Dictionary | ConceptOccurrence
) -> list[Vote]:
    """Vote each document for the source's label, scanning naively.

    Returns one vote per document, value 1 on a hit and 0 otherwise,
    sorted by (pmid, label).
    """
    votes = []
    if isinstance(source, ConceptOccurrence):
        for doc in documents:
            value = 1 if source.cui in doc.occurrences else 0
            votes.append(Vote(doc.pmid, source.label, "CO", value))
    else:
        for doc in documents:
            value = 1 if _dictionary_hit(doc, source) else 0
            votes.append(Vote(doc.pmid, source.label, source.lf, value))
    votes.sort(key=lambda v: (v.pmid, v.label))
    return votes


def build_matcher(
    dictionaries: Iterable[Dictionary], backend: str = "auto"
) -> _matcher.Matcher:
    """Compile dictionaries into a single multi-pattern automaton."""
    entries = []
    for d in dictionaries:
        channel = _matcher.CHANNEL_RAW if d.matches_raw_text else _matcher.CHANNEL_LOWER
        for element in d.elements:
            entries.append((element, channel, d.label, d.lf))
    return _matcher.build_matcher_from_entries(entries, backend=backend)


def label_documents(
    documents: Iterable[Document],
    sources: Sequence[Dictionary | ConceptOccurrence],
    compiled: _matcher.Matcher | None = None,
    threads: int = 1,
) -> list[Vote]:
    """Vote every document for every source in one pass.

    Dictionary sources are answered by the shared automaton (built here if
    not supplied); CO sources read document occurrences. The vote list
    covers the full (document, source) grid and is returned in canonical
    (pmid, label, lf) order regardless of thread count.
    """
    sources = list(sources)
    dictionaries = [s for s in sources if isinstance(s, Dictionary)]
    co_sources = [s for s in sources if isinstance(s, ConceptOccurrence)]
    dict_keys = [(d.label, d.lf) for d in dictionaries]
    if compiled is None and dictionaries:
        compiled = build_matcher(dictionaries)

    def vote_one(doc: Document) -> list[Vote]:
        votes = []
        hits = compiled.match_fields([doc.title, doc.abstract]) if compiled else set()
        for label, lf in dict_keys:
            votes.append(Vote(doc.pmid, label, lf, 1 if (label, lf) in hits else 0))
        for src in co_sources:
            value = 1 if src.cui in doc.occurrences else 0
            votes.append(Vote(doc.pmid, src.label, "CO", value))
        return votes

    all_votes: list[Vote] = []
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            for per_doc in pool.map(vote_one, documents, chunksize=64):
                all_votes.extend(per_doc)
    else:
        for doc in documents:
            all_votes.extend(vote_one(doc))
    all_votes.sort(key=lambda v: (v.pmid, v.label, v.lf))
    return all_votes


def write_votes_tsv(votes: Iterable[Vote], path: str | Path, header: bool = True) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        if header:
            fh.write("pmid\tlabel_ui\tlf\tvalue\n")
        for v in sorted(votes):
            fh.write(f"{v.pmid}\t{v.label}\t{v.lf}\t{v.value}\n")


def read_votes_tsv(path: str | Path) -> list[Vote]:
    votes = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("pmid\t"):
                continue
            pmid, label, lf, value = line.split("\t")
            votes.append(Vote(pmid, label, validate_lf(lf), int(value)))
    return votes


def write_votes_jsonl(votes: Iterable[Vote], path: str | Path) -> None:
    """Compact per-document form: one line per pmid with nested votes."""
    per_doc: dict[str, dict[str, dict[str, int]]] = {}
    for v in votes:
        per_doc.setdefault(v.pmid, {}).setdefault(v.label, {})[v.lf] = v.value
    with Path(path).open("w", encoding="utf-8") as fh:
        for pmid in sorted(per_doc):
            labels = {
                label: dict(sorted(per_doc[pmid][label].items()))
                for label in sorted(per_doc[pmid])
            }
            fh.write(
                json.dumps({"pmid": pmid, "votes": labels}, ensure_ascii=False,
                           separators=(",", ":"))
                + "\n"
            )


def read_votes_jsonl(path: str | Path) -> list[Vote]:
    votes = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            for label, by_lf in obj["votes"].items():
                for lf, value in by_lf.items():
                    votes.append(Vote(obj["pmid"], label, validate_lf(lf), int(value)))
    votes.sort(key=lambda v: (v.pmid, v.label, v.lf))
    return votes


def votes_as_posmap(votes: Iterable[Vote], lf: str) -> dict[str, set[str]]:
    """pmid -> labels voted 1 by the given labeling function."""
    out: dict[str, set[str]] = {}
    for v in votes:
        if v.lf == lf and v.value == 1:
            out.setdefault(v.pmid, set()).add(v.label)
    return out


def synthesize_occurrences(
    documents: Iterable[Document],
    use_cases: Sequence[UseCase],
    thesaurus: Thesaurus,
    lf: str = "NL",
) -> dict[str, set[str]]:
    """Fixture fallback: derive concept occurrences from dictionary hits.

    Real corpora ship pre-extracted occurrences from an external concept
    recognizer; synthetic fixtures can approximate them with a dictionary
    variant instead. Returns pmid -> cuis to splice into documents.
    """
    dictionaries = [build_dictionary(uc, thesaurus, lf) for uc in use_cases]
    cui_of_label = {uc.fine_ui: uc.concept_cui for uc in use_cases}
    votes = label_documents(documents, dictionaries)
    out: dict[str, set[str]] = {}
    for v in votes:
        if v.value:
            out.setdefault(v.pmid, set()).add(cui_of_label[v.label])
    return out
