"""Reading the shared dataset file format.

Dataset JSONL rows look like {"pmid", "text", "positive_labels",
"valid_labels"} with a .manifest.json sidecar naming the year and label
set. This module never imports the producing package; the files are the
contract.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class Row:
    pmid: str
    text: str
    positive_labels: frozenset[str]
    valid_labels: frozenset[str]


@dataclass(frozen=True)
class Dataset:
    year: int
    labels: tuple[str, ...]
    rows: tuple[Row, ...]
    source: str

    def __len__(self) -> int:
        return len(self.rows)


def manifest_path(dataset_path: Path) -> Path:
    return dataset_path.with_name(dataset_path.stem + ".manifest.json")


def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    manifest = json.loads(manifest_path(path).read_text(encoding="utf-8"))
    rows = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            rows.append(
                Row(
                    pmid=obj["pmid"],
                    text=obj["text"],
                    positive_labels=frozenset(obj["positive_labels"]),
                    valid_labels=frozenset(obj["valid_labels"]),
                )
            )
    if not manifest.get("labels"):
        raise ValueError(f"{path}: manifest names no labels")
    return Dataset(
        year=int(manifest["year"]),
        labels=tuple(manifest["labels"]),
        rows=tuple(rows),
        source=str(manifest.get("source", "")),
    )


def split_90_10(dataset: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """Uniform 90-10 split by pmid, for when no pre-split files exist."""
    pmids = sorted(r.pmid for r in dataset.rows)
    rng = random.Random(seed)
    rng.shuffle(pmids)
    n_val = max(1, round(0.1 * len(pmids)))
    val_set = set(pmids[:n_val])
    by_pmid = {r.pmid: r for r in dataset.rows}
    train_rows = tuple(by_pmid[p] for p in sorted(set(pmids) - val_set))
    val_rows = tuple(by_pmid[p] for p in sorted(val_set))
    train = Dataset(dataset.year, dataset.labels, train_rows, dataset.source)
    val = Dataset(dataset.year, dataset.labels, val_rows, dataset.source)
    return train, val


def load_training_inputs(
    dataset_dir: str | Path, seed: int, split_seed: int | None = None
) -> tuple[Dataset, Dataset]:
    """Locate the train/validation pair for one seed.

    Preferred layout: ws_train.jsonl + ws_val.jsonl (already split, and
    undersampled upstream when desired). Fallback: ws_dev.jsonl, split
    here 90-10 with split_seed (or the model seed, giving the per-seed
    split variant of the protocol).
    """
    dataset_dir = Path(dataset_dir)
    train_path = dataset_dir / "ws_train.jsonl"
    val_path = dataset_dir / "ws_val.jsonl"
    if train_path.exists() and val_path.exists():
        return read_dataset(train_path), read_dataset(val_path)
    dev_path = dataset_dir / "ws_dev.jsonl"
    if dev_path.exists():
        dev = read_dataset(dev_path)
        if len(dev) < 10:
            raise ValueError(f"{dev_path}: too small to split")
        return split_90_10(dev, split_seed if split_seed is not None else seed)
    raise FileNotFoundError(
        f"{dataset_dir}: expected ws_train.jsonl + ws_val.jsonl or ws_dev.jsonl"
    )
