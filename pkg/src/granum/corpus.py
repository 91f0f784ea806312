"""Document ingestion, validation, indexing, and per-descriptor counts.

The corpus store is a directory of pmid-sorted JSONL shards plus sidecar
index files; there is no external database. After ingestion the store is
immutable and any number of readers can stream from it concurrently.

A document's ``year`` is a single supplied integer (the indexing-snapshot
year); the ingester accepts whatever convention the data provider chose.
Concept ``occurrences`` are ingested pre-extracted, never computed here.
"""

from __future__ import annotations

import json
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass
from pathlib import Path

from .textutil import nfc
from .thesaurus import Thesaurus

SHARD_SIZE = 5000
_STORE_FORMAT = "granum-corpus"
_STORE_VERSION = 1


class CorpusError(ValueError):
    """Malformed corpus input or store."""


@dataclass(frozen=True)
class Document:
    pmid: str
    title: str
    abstract: str
    year: int
    descriptor_uis: frozenset[str]
    occurrences: frozenset[str]

    def to_json_line(self) -> str:
        # Canonical form: schema key order, sorted sets, no added whitespace.
        obj = {
            "pmid": self.pmid,
            "title": self.title,
            "abstract": self.abstract,
            "year": self.year,
            "descriptor_uis": sorted(self.descriptor_uis),
            "occurrences": sorted(self.occurrences),
        }
        return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def parse_document(obj: dict) -> Document:
    for key in ("pmid", "title", "abstract", "year", "descriptor_uis", "occurrences"):
        if key not in obj:
            raise CorpusError(f"missing field {key!r}")
    pmid = obj["pmid"]
    if not isinstance(pmid, str) or not pmid:
        raise CorpusError("pmid must be a non-empty string")
    if not isinstance(obj["title"], str) or not isinstance(obj["abstract"], str):
        raise CorpusError(f"document {pmid!r}: title and abstract must be strings")
    year = obj["year"]
    if not isinstance(year, int) or year <= 0:
        raise CorpusError(f"document {pmid!r}: year must be a positive integer")
    return Document(
        pmid=pmid,
        title=nfc(obj["title"]),
        abstract=nfc(obj["abstract"]),
        year=year,
        descriptor_uis=frozenset(obj["descriptor_uis"]),
        occurrences=frozenset(obj["occurrences"]),
    )


def ingest(path: str | Path, store_dir: str | Path) -> "CorpusHandle":
    """Validate a corpus JSONL file and build the on-disk store.

    Documents are NFC-normalized, sorted by pmid, and written as shards
    under ``store_dir`` together with descriptor and pmid indexes. Errors
    report the offending line number or the duplicated pmid.
    """
    path = Path(path)
    docs: dict[str, Document] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            try:
                doc = parse_document(obj)
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from exc
            if doc.pmid in docs:
                raise CorpusError(f"{path}:{lineno}: duplicate pmid {doc.pmid!r}")
            docs[doc.pmid] = doc
    return _write_store(docs, Path(store_dir))


def _write_store(docs: dict[str, Document], store_dir: Path) -> "CorpusHandle":
    store_dir.mkdir(parents=True, exist_ok=True)
    shards_dir = store_dir / "shards"
    index_dir = store_dir / "index"
    shards_dir.mkdir(exist_ok=True)
    index_dir.mkdir(exist_ok=True)

    ordered = sorted(docs)
    shard_of: dict[str, int] = {}
    n_shards = 0
    for shard_idx in range(0, max(1, (len(ordered) + SHARD_SIZE - 1) // SHARD_SIZE)):
        chunk = ordered[shard_idx * SHARD_SIZE : (shard_idx + 1) * SHARD_SIZE]
        shard_path = shards_dir / f"corpus-{shard_idx:05d}.jsonl"
        with shard_path.open("w", encoding="utf-8") as fh:
            for pmid in chunk:
                fh.write(docs[pmid].to_json_line() + "\n")
                shard_of[pmid] = shard_idx
        n_shards = shard_idx + 1

    by_descriptor: dict[str, list[str]] = {}
    for pmid in ordered:
        for ui in docs[pmid].descriptor_uis:
            by_descriptor.setdefault(ui, []).append(pmid)
    (index_dir / "descriptors.json").write_text(
        json.dumps({ui: by_descriptor[ui] for ui in sorted(by_descriptor)}),
        encoding="utf-8",
    )
    (index_dir / "pmids.json").write_text(
        json.dumps({pmid: [shard_of[pmid], docs[pmid].year] for pmid in ordered}),
        encoding="utf-8",
    )
    (store_dir / "manifest.json").write_text(
        json.dumps(
            {
                "format": _STORE_FORMAT,
                "version": _STORE_VERSION,
                "documents": len(ordered),
                "shards": n_shards,
                "shard_size": SHARD_SIZE,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    return CorpusHandle(store_dir)


class CorpusHandle:
    """Read access to an ingested corpus store."""

    def __init__(self, store_dir: str | Path):
        self.store_dir = Path(store_dir)
        manifest_path = self.store_dir / "manifest.json"
        if not manifest_path.exists():
            raise CorpusError(f"not a corpus store: {self.store_dir}")
        self.manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        if self.manifest.get("format") != _STORE_FORMAT:
            raise CorpusError(f"not a corpus store: {self.store_dir}")
        index_dir = self.store_dir / "index"
        self._by_descriptor: dict[str, list[str]] = json.loads(
            (index_dir / "descriptors.json").read_text(encoding="utf-8")
        )
        raw = json.loads((index_dir / "pmids.json").read_text(encoding="utf-8"))
        self._shard_of = {pmid: entry[0] for pmid, entry in raw.items()}
        self._year_of = {pmid: entry[1] for pmid, entry in raw.items()}

    def __len__(self) -> int:
        return len(self._shard_of)

    def __contains__(self, pmid: str) -> bool:
        return pmid in self._shard_of

    @property
    def pmids(self) -> list[str]:
        return sorted(self._shard_of)

    def year_of(self, pmid: str) -> int:
        try:
            return self._year_of[pmid]
        except KeyError:
            raise CorpusError(f"unknown pmid {pmid!r}") from None

    def _shard_path(self, shard_idx: int) -> Path:
        return self.store_dir / "shards" / f"corpus-{shard_idx:05d}.jsonl"

    def fetch(self, pmids: Iterable[str]) -> Iterator[Document]:
        """Stream the given documents in ascending pmid order."""
        wanted = sorted(set(pmids))
        unknown = [p for p in wanted if p not in self._shard_of]
        if unknown:
            raise CorpusError(f"unknown pmid {unknown[0]!r}")
        by_shard: dict[int, set[str]] = {}
        for pmid in wanted:
            by_shard.setdefault(self._shard_of[pmid], set()).add(pmid)
        # Shards hold ascending pmid ranges, so shard order preserves
        # global pmid order.
        for shard_idx in sorted(by_shard):
            targets = by_shard[shard_idx]
            with self._shard_path(shard_idx).open(encoding="utf-8") as fh:
                for line in fh:
                    obj = json.loads(line)
                    if obj["pmid"] in targets:
                        yield parse_document(obj)

    def __iter__(self) -> Iterator[Document]:
        for shard_idx in range(self.manifest["shards"]):
            shard = self._shard_path(shard_idx)
            if not shard.exists():
                continue
            with shard.open(encoding="utf-8") as fh:
                for line in fh:
                    yield parse_document(json.loads(line))

    def get(self, pmid: str) -> Document:
        return next(self.fetch([pmid]))

    def annotated_pmids(self, descriptor_ui: str, thesaurus: Thesaurus) -> list[str]:
        """Sorted pmids annotated with the descriptor or any descendant."""
        thesaurus.get(descriptor_ui)
        pmids: set[str] = set()
        for ui in thesaurus.with_descendants(descriptor_ui):
            pmids.update(self._by_descriptor.get(ui, ()))
        return sorted(pmids)

    def query(
        self,
        descriptor_ui: str,
        thesaurus: Thesaurus,
        year_predicate: Callable[[int], bool],
    ) -> Iterator[Document]:
        """Stream documents annotated with the descriptor (descendants
        included) whose year satisfies the predicate, ascending pmid."""
        pmids = [
            p
            for p in self.annotated_pmids(descriptor_ui, thesaurus)
            if year_predicate(self._year_of[p])
        ]
        return self.fetch(pmids)

    def export(self, path: str | Path) -> None:
        """Concatenate all shards into a single canonical JSONL file."""
        with Path(path).open("w", encoding="utf-8") as out:
            for doc in self:
                out.write(doc.to_json_line() + "\n")


class CorpusStats:
    """Per-descriptor counts around a year boundary.

    ``dev_count`` counts articles strictly before the year, ``test_count``
    articles at or after it, both including descendant annotations.
    ``dev_concept_positive`` counts development articles of a host
    descriptor where a given concept occurs.
    """

    def __init__(
        self,
        year: int,
        dev_counts: dict[str, int],
        test_counts: dict[str, int],
        dev_concept_positive_counts: dict[tuple[str, str], int],
    ):
        self.year = year
        self._dev = dev_counts
        self._test = test_counts
        self._dev_cp = dev_concept_positive_counts

    def dev_count(self, ui: str) -> int:
        return self._dev.get(ui, 0)

    def test_count(self, ui: str) -> int:
        return self._test.get(ui, 0)

    def dev_concept_positive(self, host_ui: str, cui: str) -> int:
        return self._dev_cp.get((host_ui, cui), 0)


def compute_stats(corpus: CorpusHandle, thesaurus: Thesaurus, year: int) -> CorpusStats:
    """One pass over the corpus, crediting each annotation upward.

    An article annotated with a descendant of d counts for d, so each
    document credits the ancestor closure of its annotations. Concept
    cooccurrence is tracked for every (host, concept-of-promoted-descriptor)
    pair the thesaurus admits.
    """
    ancestors: dict[str, set[str]] = {}

    def ancestor_closure(ui: str) -> set[str]:
        cached = ancestors.get(ui)
        if cached is not None:
            return cached
        closed = {ui}
        stack = [p for p in thesaurus.descriptors[ui].parents if p in thesaurus]
        while stack:
            cur = stack.pop()
            if cur in closed:
                continue
            closed.add(cur)
            stack.extend(p for p in thesaurus.descriptors[cur].parents if p in thesaurus)
        ancestors[ui] = closed
        return closed

    # (host, cui) pairs worth counting: concepts of descriptors that name a host.
    cuis_by_host: dict[str, set[str]] = {}
    for d in thesaurus.descriptors.values():
        if d.host_ui:
            cuis_by_host.setdefault(d.host_ui, set()).update(c.cui for c in d.concepts)

    dev: dict[str, int] = {}
    test: dict[str, int] = {}
    dev_cp: dict[tuple[str, str], int] = {}
    for doc in corpus:
        credited: set[str] = set()
        for ui in doc.descriptor_uis:
            if ui in thesaurus:
                credited.update(ancestor_closure(ui))
        is_dev = doc.year < year
        counts = dev if is_dev else test
        for ui in credited:
            counts[ui] = counts.get(ui, 0) + 1
        if is_dev:
            for host in credited:
                for cui in cuis_by_host.get(host, ()):
                    if cui in doc.occurrences:
                        key = (host, cui)
                        dev_cp[key] = dev_cp.get(key, 0) + 1
    return CorpusStats(year, dev, test, dev_cp)
