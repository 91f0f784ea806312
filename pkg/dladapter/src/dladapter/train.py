"""Per-year training runs: one multi-label model per seed, early stopped.

Each seed trains its own model on the training part, monitors plain BCE
on the validation part after every epoch, and stops once that loss rises.
The last three epoch checkpoints are kept so the prev/best/next candidate
models survive; everything is written under out_dir/seed<k>/ together
with the epoch trace.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .data import Dataset, load_training_inputs
from .encoders import MultiLabelClassifier, build_encoder
from .losses import bce, label_frequencies, rebalanced_focal_bce
from .protocol import EpochSelection, TrainProtocolConfig, select_epochs, should_stop


@dataclass
class SeedRun:
    seed: int
    selection: EpochSelection
    val_losses: list[float]
    checkpoints: dict[str, Path]  # role -> file
    warnings: list[str]


def _targets(dataset: Dataset, labels: tuple[str, ...]) -> torch.Tensor:
    index = {label: j for j, label in enumerate(labels)}
    t = torch.zeros(len(dataset.rows), len(labels))
    for i, row in enumerate(dataset.rows):
        for label in row.positive_labels:
            if label in index:
                t[i, index[label]] = 1.0
    return t


def _epoch_loss(model, ids, mask, targets, batch_size: int) -> float:
    model.eval()
    total = 0.0
    n = ids.shape[0]
    with torch.no_grad():
        for start in range(0, n, batch_size):
            sl = slice(start, min(start + batch_size, n))
            logits = model(ids[sl], mask[sl])
            total += bce(logits, targets[sl]).item() * (sl.stop - sl.start)
    return total / n


def train_seed(
    train: Dataset,
    val: Dataset,
    seed: int,
    config: TrainProtocolConfig,
    out_dir: Path,
) -> SeedRun:
    torch.manual_seed(seed)
    labels = train.labels
    model = MultiLabelClassifier(build_encoder(config.encoder), len(labels))
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)

    train_ids, train_mask = model.encoder.tokenize([r.text for r in train.rows])
    val_ids, val_mask = model.encoder.tokenize([r.text for r in val.rows])
    train_targets = _targets(train, labels)
    val_targets = _targets(val, labels)
    frequencies = label_frequencies(train_targets)

    out_dir.mkdir(parents=True, exist_ok=True)
    generator = torch.Generator().manual_seed(seed)
    val_losses: list[float] = []
    recent: dict[int, dict] = {}  # epoch -> state_dict copy (rolling window)
    n = train_ids.shape[0]

    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = torch.randperm(n, generator=generator)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            optimizer.zero_grad()
            logits = model(train_ids[idx], train_mask[idx])
            if config.loss == "BCE":
                loss = bce(logits, train_targets[idx])
            else:
                loss = rebalanced_focal_bce(
                    logits,
                    train_targets[idx],
                    gamma=config.focal_gamma,
                    rebalance=config.rebalance,
                    frequencies=frequencies,
                    alpha=config.rebalance_alpha,
                    beta=config.rebalance_beta,
                    mu=config.rebalance_mu,
                )
            loss.backward()
            optimizer.step()

        val_losses.append(
            _epoch_loss(model, val_ids, val_mask, val_targets, config.batch_size)
        )
        recent[epoch] = {k: v.detach().clone() for k, v in model.state_dict().items()}
        for old in [e for e in recent if e < epoch - 2]:
            del recent[old]
        if should_stop(val_losses):
            break

    selection = select_epochs(val_losses)
    warnings = []
    checkpoints: dict[str, Path] = {}
    roles = {"best": selection.best_ep, "prev": selection.prev_ep,
             "next": selection.next_ep}
    for role, epoch in roles.items():
        if epoch is None:
            warnings.append(f"{role}_ep unavailable (stopped at epoch "
                            f"{selection.stopped_epoch})")
            continue
        path = out_dir / f"ep_{role}.pt"
        torch.save(
            {
                "state_dict": recent[epoch],
                "epoch": epoch,
                "role": role,
                "labels": list(labels),
                "encoder": config.encoder,
                "seed": seed,
            },
            path,
        )
        checkpoints[role] = path

    trace = {
        "seed": seed,
        "val_losses": val_losses,
        "stopped_epoch": selection.stopped_epoch,
        "stopped_early": selection.stopped_early,
        "best_ep": selection.best_ep,
        "prev_ep": selection.prev_ep,
        "next_ep": selection.next_ep,
        "warnings": warnings,
    }
    (out_dir / "trace.json").write_text(
        json.dumps(trace, indent=2) + "\n", encoding="utf-8"
    )
    return SeedRun(seed, selection, val_losses, checkpoints, warnings)


def train_year(
    dataset_dir: str | Path, config: TrainProtocolConfig, out_dir: str | Path
) -> list[SeedRun]:
    """Run the whole per-year protocol: one early-stopped model per seed."""
    out_dir = Path(out_dir)
    runs = []
    for seed in config.seeds:
        train, val = load_training_inputs(dataset_dir, seed, config.split_seed)
        if not train.labels:
            raise ValueError("dataset has no labels")
        runs.append(train_seed(train, val, seed, config, out_dir / f"seed{seed}"))
    summary = {
        "seeds": list(config.seeds),
        "encoder": config.encoder,
        "loss": config.loss,
        "runs": [
            {
                "seed": run.seed,
                "stopped_epoch": run.selection.stopped_epoch,
                "best_ep": run.selection.best_ep,
                "warnings": run.warnings,
            }
            for run in runs
        ],
    }
    (out_dir / "runs.json").write_text(
        json.dumps(summary, indent=2) + "\n", encoding="utf-8"
    )
    return runs
