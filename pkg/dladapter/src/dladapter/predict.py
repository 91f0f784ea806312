"""Six-seed majority-voted predictions in the shared JSONL schema.

Each seed's checkpoint for the chosen epoch role scores every document;
a label is assigned when its sigmoid exceeds 0.5 for at least 4 of the 6
seeds. Validity filtering is deliberately left to the evaluator.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch

from .data import Dataset
from .encoders import MultiLabelClassifier, build_encoder

VOTE_PANEL = 6
VOTE_THRESHOLD = 4


def load_checkpoint(path: Path) -> tuple[MultiLabelClassifier, list[str]]:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    labels = list(payload["labels"])
    model = MultiLabelClassifier(build_encoder(payload["encoder"]), len(labels))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, labels


def seed_scores(
    model: MultiLabelClassifier, texts: list[str], batch_size: int = 32
) -> torch.Tensor:
    ids, mask = model.encoder.tokenize(texts)
    outputs = []
    with torch.no_grad():
        for start in range(0, ids.shape[0], batch_size):
            sl = slice(start, start + batch_size)
            outputs.append(torch.sigmoid(model(ids[sl], mask[sl])))
    return torch.cat(outputs, dim=0)


def predict_voted(
    run_dir: str | Path,
    epoch_choice: str,
    dataset: Dataset,
    batch_size: int = 32,
) -> dict[str, set[str]]:
    """Majority vote over the six per-seed checkpoints of one run."""
    run_dir = Path(run_dir)
    seed_dirs = sorted(p for p in run_dir.glob("seed*") if p.is_dir())
    if len(seed_dirs) != VOTE_PANEL:
        raise ValueError(
            f"{run_dir}: expected {VOTE_PANEL} seed runs, found {len(seed_dirs)}"
        )
    texts = [row.text for row in dataset.rows]
    votes: torch.Tensor | None = None
    labels: list[str] | None = None
    for seed_dir in seed_dirs:
        ckpt = seed_dir / f"ep_{epoch_choice}.pt"
        if not ckpt.exists():
            raise FileNotFoundError(
                f"missing checkpoint {ckpt} (epoch role unavailable for this run?)"
            )
        model, ckpt_labels = load_checkpoint(ckpt)
        if labels is None:
            labels = ckpt_labels
        elif labels != ckpt_labels:
            raise ValueError("seed checkpoints disagree on the label set")
        scores = seed_scores(model, texts, batch_size)
        positive = (scores > 0.5).to(torch.int64)
        votes = positive if votes is None else votes + positive

    assert votes is not None and labels is not None
    assigned = votes >= VOTE_THRESHOLD
    predictions: dict[str, set[str]] = {}
    for i, row in enumerate(dataset.rows):
        predictions[row.pmid] = {
            labels[j] for j in range(len(labels)) if bool(assigned[i, j])
        }
    return predictions


def write_predictions_jsonl(predictions: dict[str, set[str]], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for pmid in sorted(predictions):
            fh.write(
                json.dumps(
                    {"pmid": pmid, "labels": sorted(predictions[pmid])},
                    ensure_ascii=False,
                    separators=(",", ":"),
                )
                + "\n"
            )
