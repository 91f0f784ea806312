"""Per-year multi-label dataset assembly, splitting, and undersampling.

A dataset row is valid for a fine-grained label only when the document
carries the coarse annotation of the label's host descriptor (or one of
its descendants); positive labels are always a subset of valid labels.
Development rows (year strictly before the reference year) carry weak
labels from a chosen source, test rows (year at or after it) ground truth.
"""

from __future__ import annotations

import json
import random
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, replace
from pathlib import Path

from .corpus import CorpusHandle
from .thesaurus import Thesaurus, UseCase

GROUND_TRUTH = "ground_truth"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetRow:
    pmid: str
    text: str
    positive_labels: frozenset[str]
    valid_labels: frozenset[str]


@dataclass(frozen=True)
class LabeledDataset:
    year: int
    labels: tuple[str, ...]
    rows: tuple[DatasetRow, ...]
    source: str

    def __post_init__(self) -> None:
        if not self.labels:
            raise DatasetError("label set must be non-empty")
        label_set = set(self.labels)
        for row in self.rows:
            if not row.positive_labels <= row.valid_labels:
                raise DatasetError(
                    f"row {row.pmid!r}: positive labels must be a subset of valid labels"
                )
            if not row.valid_labels:
                raise DatasetError(f"row {row.pmid!r}: valid for no label")
            if not row.valid_labels <= label_set:
                raise DatasetError(f"row {row.pmid!r}: unknown label in valid set")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def pmids(self) -> list[str]:
        return [row.pmid for row in self.rows]

    def row_map(self) -> dict[str, DatasetRow]:
        return {row.pmid: row for row in self.rows}

    def valid_pmids(self, label: str) -> list[str]:
        return [row.pmid for row in self.rows if label in row.valid_labels]

    def positives(self, label: str) -> list[str]:
        return [row.pmid for row in self.rows if label in row.positive_labels]


@dataclass(frozen=True)
class WeakSource:
    """Weak positives by pmid, tagged with where they came from."""

    tag: str  # e.g. weak_CO, weak_ALO3
    posmap: Mapping[str, set[str]]


@dataclass(frozen=True)
class SplitPair:
    train: LabeledDataset
    val: LabeledDataset
    seed: int

    def __post_init__(self) -> None:
        overlap = set(self.train.pmids) & set(self.val.pmids)
        if overlap:
            raise DatasetError("train and validation parts share documents")
        total = len(self.train) + len(self.val)
        # 10% may not be achievable exactly for every size; require the
        # closest integer split.
        if abs(len(self.val) - 0.1 * total) > 0.5 + 1e-9:
            raise DatasetError("validation part is not a 10% split")


@dataclass(frozen=True)
class BalanceConfig:
    balance_n: float = 10.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.balance_n < 1:
            raise DatasetError("balance_n must be at least 1")


def _validity(
    doc_uis: frozenset[str],
    use_cases: Sequence[UseCase],
    host_closures: Mapping[str, set[str]],
) -> frozenset[str]:
    valid = set()
    for uc in use_cases:
        if doc_uis & host_closures[uc.host_ui]:
            valid.add(uc.fine_ui)
    return frozenset(valid)


def _host_closures(
    use_cases: Sequence[UseCase], thesaurus: Thesaurus
) -> dict[str, set[str]]:
    return {uc.host_ui: thesaurus.with_descendants(uc.host_ui) for uc in use_cases}


def _shared_year(use_cases: Sequence[UseCase]) -> int:
    years = {uc.year for uc in use_cases}
    if len(years) != 1:
        raise DatasetError("use cases must share a single year")
    return years.pop()


def _doc_text(title: str, abstract: str) -> str:
    return title + "\n" + abstract


def build_dev(
    use_cases: Sequence[UseCase],
    corpus: CorpusHandle,
    thesaurus: Thesaurus,
    weak: WeakSource,
) -> LabeledDataset:
    """Development dataset: every article before the year that is valid for
    at least one use case, with weak positives from the given source.

    Weak labels for documents not valid for the label are dropped rather
    than kept, preserving the positive-within-valid invariant.
    """
    year = _shared_year(use_cases)
    closures = _host_closures(use_cases, thesaurus)
    labels = tuple(sorted(uc.fine_ui for uc in use_cases))
    rows = []
    pmids: set[str] = set()
    for uc in use_cases:
        pmids.update(
            p for p in corpus.annotated_pmids(uc.host_ui, thesaurus)
            if corpus.year_of(p) < year
        )
    for doc in corpus.fetch(pmids):
        valid = _validity(doc.descriptor_uis, use_cases, closures)
        if not valid:
            continue
        positive = frozenset(weak.posmap.get(doc.pmid, set())) & valid
        rows.append(
            DatasetRow(
                pmid=doc.pmid,
                text=_doc_text(doc.title, doc.abstract),
                positive_labels=positive,
                valid_labels=valid,
            )
        )
    if not rows:
        raise DatasetError(f"no documents qualify for the {year} development dataset")
    return LabeledDataset(year=year, labels=labels, rows=tuple(rows), source=weak.tag)


def build_test(
    use_cases: Sequence[UseCase], corpus: CorpusHandle, thesaurus: Thesaurus
) -> LabeledDataset:
    """Test dataset: articles at or after the year, ground-truth positives
    from the fine descriptors' own annotations."""
    year = _shared_year(use_cases)
    closures = _host_closures(use_cases, thesaurus)
    labels = tuple(sorted(uc.fine_ui for uc in use_cases))
    fine_uis = {uc.fine_ui for uc in use_cases}
    rows = []
    pmids: set[str] = set()
    for uc in use_cases:
        pmids.update(
            p for p in corpus.annotated_pmids(uc.host_ui, thesaurus)
            if corpus.year_of(p) >= year
        )
    for doc in corpus.fetch(pmids):
        valid = _validity(doc.descriptor_uis, use_cases, closures)
        if not valid:
            continue
        positive = frozenset(doc.descriptor_uis & fine_uis) & valid
        rows.append(
            DatasetRow(
                pmid=doc.pmid,
                text=_doc_text(doc.title, doc.abstract),
                positive_labels=positive,
                valid_labels=valid,
            )
        )
    if not rows:
        raise DatasetError(f"no documents qualify for the {year} test dataset")
    return LabeledDataset(year=year, labels=labels, rows=tuple(rows), source=GROUND_TRUTH)


def split_90_10(dataset: LabeledDataset, seed: int) -> SplitPair:
    """Uniform random 90-10 partition by pmid, deterministic given the seed.

    No stratification is applied; rare labels may be absent from the
    validation part.
    """
    if len(dataset) < 10:
        raise DatasetError("dataset too small to split (need at least 10 rows)")
    pmids = sorted(dataset.pmids)
    rng = random.Random(seed)
    rng.shuffle(pmids)
    n_val = max(1, round(0.1 * len(pmids)))
    val_pmids = set(pmids[:n_val])
    by_pmid = dataset.row_map()
    train_rows = tuple(by_pmid[p] for p in sorted(set(pmids) - val_pmids))
    val_rows = tuple(by_pmid[p] for p in sorted(val_pmids))
    train = replace(dataset, rows=train_rows)
    val = replace(dataset, rows=val_rows)
    return SplitPair(train=train, val=val, seed=seed)


def undersample(dataset: LabeledDataset, config: BalanceConfig) -> LabeledDataset:
    """Remove superfluous negative rows until every label's valid-negative
    count is close to balance_n times its positive count.

    A negative instance is a row with no positive label at all; rows that
    are positive for any label are never touched. A drawn negative is kept
    when some label that is at or under its target ratio still needs it
    (the row is valid for that label); otherwise it is removed and the
    valid-negative counts of all its labels are decremented. Every draw
    marks one instance checked, so the loop runs at most once per negative.
    """
    balance_n = config.balance_n
    positives = {
        label: sum(1 for row in dataset.rows if label in row.positive_labels)
        for label in dataset.labels
    }
    valid_negatives = {
        label: sum(
            1
            for row in dataset.rows
            if label in row.valid_labels and label not in row.positive_labels
        )
        for label in dataset.labels
    }
    negatives = [i for i, row in enumerate(dataset.rows) if not row.positive_labels]
    order = sorted(negatives, key=lambda i: dataset.rows[i].pmid)
    random.Random(config.seed).shuffle(order)

    removed: set[int] = set()
    for i in order:
        if not any(
            valid_negatives[l] > balance_n * positives[l] for l in dataset.labels
        ):
            break
        row = dataset.rows[i]
        necessary = any(
            valid_negatives[l] <= balance_n * positives[l] for l in row.valid_labels
        )
        if necessary:
            continue
        removed.add(i)
        for l in row.valid_labels:
            valid_negatives[l] -= 1
    rows = tuple(row for i, row in enumerate(dataset.rows) if i not in removed)
    return replace(dataset, rows=rows)


def write_dataset(
    dataset: LabeledDataset, path: str | Path, manifest_extra: dict | None = None
) -> None:
    """Write rows as JSONL (ascending pmid) plus a manifest sidecar."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for row in sorted(dataset.rows, key=lambda r: r.pmid):
            # Assert the validity closure on write.
            if not row.positive_labels <= row.valid_labels:
                raise DatasetError(f"row {row.pmid!r}: positive outside valid")
            fh.write(
                json.dumps(
                    {
                        "pmid": row.pmid,
                        "text": row.text,
                        "positive_labels": sorted(row.positive_labels),
                        "valid_labels": sorted(row.valid_labels),
                    },
                    ensure_ascii=False,
                    separators=(",", ":"),
                )
                + "\n"
            )
    manifest = {
        "year": dataset.year,
        "labels": list(dataset.labels),
        "source": dataset.source,
        "rows": len(dataset.rows),
    }
    manifest.update(manifest_extra or {})
    manifest_path(path).write_text(
        json.dumps(manifest, indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def manifest_path(dataset_path: str | Path) -> Path:
    dataset_path = Path(dataset_path)
    return dataset_path.with_name(dataset_path.stem + ".manifest.json")


def read_dataset(path: str | Path) -> LabeledDataset:
    path = Path(path)
    manifest = json.loads(manifest_path(path).read_text(encoding="utf-8"))
    rows = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            rows.append(
                DatasetRow(
                    pmid=obj["pmid"],
                    text=obj["text"],
                    positive_labels=frozenset(obj["positive_labels"]),
                    valid_labels=frozenset(obj["valid_labels"]),
                )
            )
    return LabeledDataset(
        year=int(manifest["year"]),
        labels=tuple(manifest["labels"]),
        rows=tuple(rows),
        source=manifest["source"],
    )


def weak_source_from_posmap(tag: str, posmap: Mapping[str, Iterable[str]]) -> WeakSource:
    return WeakSource(tag=tag, posmap={p: set(ls) for p, ls in posmap.items()})
