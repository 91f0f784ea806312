"""Fixture builders: dataset files in the shared JSONL contract."""

from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

LABELS = ("D150", "D250")

SIGNAL = {
    "D150": ["audiogenic reflex syndrome", "sound reflex attack"],
    "D250": ["sphingo storage disease", "cerebroside lipid excess"],
}
FILLER = (
    "patients study results clinical analysis treatment cohort response "
    "therapy outcome assessment followup baseline control group trial"
).split()


def make_rows(n: int, seed: int = 7) -> list[dict]:
    rng = random.Random(seed)
    rows = []
    for i in range(n):
        words = [rng.choice(FILLER) for _ in range(rng.randint(6, 14))]
        positive = []
        for label in LABELS:
            if rng.random() < 0.25:
                words.insert(rng.randrange(len(words)), rng.choice(SIGNAL[label]))
                positive.append(label)
        rows.append(
            {
                "pmid": f"p{i:04d}",
                "text": " ".join(words),
                "positive_labels": sorted(positive),
                "valid_labels": list(LABELS),
            }
        )
    return rows


def write_dataset(path: Path, rows: list[dict], year: int = 2006,
                  source: str = "weak_ALO3") -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    manifest = {
        "year": year,
        "labels": list(LABELS),
        "source": source,
        "rows": len(rows),
    }
    path.with_name(path.stem + ".manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    return path


@pytest.fixture(scope="session")
def fixture_200(tmp_path_factory) -> Path:
    """A 200-document training directory: 180 train / 20 validation."""
    root = tmp_path_factory.mktemp("data200")
    rows = make_rows(200)
    write_dataset(root / "ws_train.jsonl", rows[:180])
    write_dataset(root / "ws_val.jsonl", rows[180:])
    return root


@pytest.fixture(scope="session")
def dev_only_dir(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("dev_only")
    write_dataset(root / "ws_dev.jsonl", make_rows(60, seed=11))
    return root
