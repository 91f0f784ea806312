"""Versioned taxonomy model and evaluation use-case selection.

A thesaurus snapshot is one pre-merged JSON file per reference year. Each
descriptor records where it came from: descriptors created by promoting a
subordinate concept out of a host descriptor carry ``provenance_type``
``"subdivision_1_2"`` and the host's ui. Those promotion events are the raw
material for building retrospective benchmarks.
"""

from __future__ import annotations

import json
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path

PROVENANCE_SUBDIVISION = "subdivision_1_2"
PROVENANCE_OTHER = "other"


class ThesaurusError(ValueError):
    """Malformed thesaurus file or violated structural invariant."""


@dataclass(frozen=True)
class Concept:
    """A single meaning inside a descriptor: ``terms[0]`` is the name."""

    cui: str
    terms: tuple[str, ...]
    preferred: bool

    @property
    def name(self) -> str:
        return self.terms[0]

    @property
    def synonyms(self) -> tuple[str, ...]:
        return self.terms[1:]


@dataclass(frozen=True)
class Descriptor:
    ui: str
    name: str
    concepts: tuple[Concept, ...]
    parents: tuple[str, ...]
    year_introduced: int
    provenance_type: str
    host_ui: str | None = None


@dataclass(frozen=True)
class UseCase:
    """A promotion event selected for evaluation.

    ``fine_ui`` is the new single-concept descriptor, ``host_ui`` the
    coarse descriptor that used to host the concept, ``year`` the year the
    promotion happened.
    """

    concept_cui: str
    fine_ui: str
    host_ui: str
    year: int

    def to_dict(self) -> dict:
        return {
            "concept_cui": self.concept_cui,
            "fine_ui": self.fine_ui,
            "host_ui": self.host_ui,
            "year": self.year,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "UseCase":
        return cls(
            concept_cui=obj["concept_cui"],
            fine_ui=obj["fine_ui"],
            host_ui=obj["host_ui"],
            year=int(obj["year"]),
        )


@dataclass(frozen=True)
class SelectionThresholds:
    """Data-availability thresholds for use-case selection.

    Defaults are the values used for all experiments: at least 10 test
    positives, 10..1,000,000 development articles, and at least 10
    development articles where the concept occurs.
    """

    test_positive_min: int = 10
    dev_min: int = 10
    dev_max: int = 1_000_000
    dev_positive_min: int = 10

    def __post_init__(self) -> None:
        for name in ("test_positive_min", "dev_min", "dev_max", "dev_positive_min"):
            if getattr(self, name) < 0:
                raise ValueError(f"threshold {name} must be non-negative")
        if self.dev_min > self.dev_max:
            raise ValueError("dev_min must not exceed dev_max")


@dataclass
class Thesaurus:
    """Immutable after load; safe for concurrent read access."""

    descriptors: dict[str, Descriptor]
    _children: dict[str, list[str]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        children: dict[str, list[str]] = {ui: [] for ui in self.descriptors}
        for d in self.descriptors.values():
            for parent in d.parents:
                if parent in children:
                    children[parent].append(d.ui)
        self._children = {ui: sorted(kids) for ui, kids in children.items()}

    def __len__(self) -> int:
        return len(self.descriptors)

    def __contains__(self, ui: str) -> bool:
        return ui in self.descriptors

    def get(self, ui: str) -> Descriptor:
        try:
            return self.descriptors[ui]
        except KeyError:
            raise ThesaurusError(f"unknown descriptor ui {ui!r}") from None

    def children(self, ui: str) -> list[str]:
        self.get(ui)
        return list(self._children[ui])

    def is_leaf(self, ui: str) -> bool:
        return not self.children(ui)

    def descendants(self, ui: str) -> set[str]:
        """Transitive closure of child edges, excluding ``ui`` itself."""
        self.get(ui)
        seen: set[str] = set()
        stack = list(self._children[ui])
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            stack.extend(self._children[cur])
        return seen

    def with_descendants(self, ui: str) -> set[str]:
        """``{ui}`` plus its descendants: the "annotated with d" convention."""
        closed = self.descendants(ui)
        closed.add(ui)
        return closed


def _parse_concept(obj: dict, descriptor_ui: str) -> Concept:
    cui = obj.get("cui")
    if not cui or not isinstance(cui, str):
        raise ThesaurusError(f"descriptor {descriptor_ui!r}: concept with empty cui")
    terms = obj.get("terms")
    if not terms or not isinstance(terms, list):
        raise ThesaurusError(
            f"descriptor {descriptor_ui!r}: concept {cui!r} has no terms"
        )
    return Concept(cui=cui, terms=tuple(terms), preferred=bool(obj.get("preferred")))


def _parse_descriptor(obj: dict) -> Descriptor:
    ui = obj.get("ui")
    if not ui or not isinstance(ui, str):
        raise ThesaurusError("descriptor with missing or empty ui")
    provenance = obj.get("provenance_type")
    if provenance not in (PROVENANCE_SUBDIVISION, PROVENANCE_OTHER):
        raise ThesaurusError(f"descriptor {ui!r}: bad provenance_type {provenance!r}")
    host_ui = obj.get("host_ui")
    if provenance == PROVENANCE_SUBDIVISION and not host_ui:
        raise ThesaurusError(f"descriptor {ui!r}: subdivision_1_2 requires host_ui")
    concepts = [_parse_concept(c, ui) for c in obj.get("concepts", [])]
    if not concepts:
        raise ThesaurusError(f"descriptor {ui!r}: no concepts")
    cuis = [c.cui for c in concepts]
    if len(set(cuis)) != len(cuis):
        raise ThesaurusError(f"descriptor {ui!r}: duplicate concept cui")
    if sum(1 for c in concepts if c.preferred) != 1:
        raise ThesaurusError(f"descriptor {ui!r}: expected exactly one preferred concept")
    parents = tuple(obj.get("parents", []))
    if ui in parents:
        raise ThesaurusError(f"descriptor {ui!r}: lists itself as parent")
    return Descriptor(
        ui=ui,
        name=obj.get("name", ""),
        concepts=tuple(concepts),
        parents=parents,
        year_introduced=int(obj["year_introduced"]),
        provenance_type=provenance,
        host_ui=host_ui,
    )


def _check_acyclic(descriptors: dict[str, Descriptor]) -> None:
    # Kahn's algorithm over child edges; leftovers sit on a cycle.
    indegree = {ui: 0 for ui in descriptors}
    for d in descriptors.values():
        for parent in d.parents:
            if parent in descriptors:
                indegree[d.ui] += 1
    queue = [ui for ui, deg in indegree.items() if deg == 0]
    visited = 0
    children: dict[str, list[str]] = {ui: [] for ui in descriptors}
    for d in descriptors.values():
        for parent in d.parents:
            if parent in descriptors:
                children[parent].append(d.ui)
    while queue:
        cur = queue.pop()
        visited += 1
        for child in children[cur]:
            indegree[child] -= 1
            if indegree[child] == 0:
                queue.append(child)
    if visited != len(descriptors):
        offender = min(ui for ui, deg in indegree.items() if deg > 0)
        raise ThesaurusError(f"hierarchy cycle involving descriptor {offender!r}")


def load_thesaurus(path: str | Path) -> Thesaurus:
    """Load and validate a thesaurus snapshot JSON file.

    Raises ThesaurusError naming the offending ui on duplicate uis,
    hierarchy cycles, or per-descriptor invariant violations.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ThesaurusError(f"cannot parse thesaurus file {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise ThesaurusError("thesaurus file must contain a top-level array")
    descriptors: dict[str, Descriptor] = {}
    for obj in raw:
        d = _parse_descriptor(obj)
        if d.ui in descriptors:
            raise ThesaurusError(f"duplicate descriptor ui {d.ui!r}")
        descriptors[d.ui] = d
    _check_acyclic(descriptors)
    return Thesaurus(descriptors=descriptors)


def select_use_cases(
    thesaurus: Thesaurus,
    corpus_stats,
    year: int,
    thresholds: SelectionThresholds,
) -> list[UseCase]:
    """Select the promotion events of ``year`` that qualify for evaluation.

    A descriptor qualifies when all of the following hold:

    1. it was introduced in ``year`` by a subdivision_1_2 promotion;
    2. it carries exactly one concept and is a leaf of the hierarchy;
    3. the corpus provides enough data: at least ``test_positive_min``
       test articles annotated with it, between ``dev_min`` and ``dev_max``
       development articles annotated with its host (descendants included),
       and at least ``dev_positive_min`` of those host articles where the
       concept occurs.

    ``corpus_stats`` is a ``corpus.CorpusStats`` computed for ``year``.
    Output is sorted by fine_ui; an empty list is a valid result.
    """
    selected = []
    for d in thesaurus.descriptors.values():
        if d.provenance_type != PROVENANCE_SUBDIVISION or d.year_introduced != year:
            continue
        if len(d.concepts) != 1 or not thesaurus.is_leaf(d.ui):
            continue
        concept = d.concepts[0]
        host_ui = d.host_ui
        assert host_ui is not None  # guaranteed by the load-time invariant
        if corpus_stats.test_count(d.ui) < thresholds.test_positive_min:
            continue
        dev = corpus_stats.dev_count(host_ui)
        if not (thresholds.dev_min <= dev <= thresholds.dev_max):
            continue
        if corpus_stats.dev_concept_positive(host_ui, concept.cui) < thresholds.dev_positive_min:
            continue
        selected.append(
            UseCase(concept_cui=concept.cui, fine_ui=d.ui, host_ui=host_ui, year=year)
        )
    return sorted(selected, key=lambda uc: uc.fine_ui)


def write_use_cases(use_cases: Iterable[UseCase], path: str | Path) -> None:
    payload = [uc.to_dict() for uc in use_cases]
    Path(path).write_text(
        json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def read_use_cases(path: str | Path) -> list[UseCase]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return [UseCase.from_dict(obj) for obj in raw]
