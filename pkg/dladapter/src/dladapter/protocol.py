"""Early-stopping protocol: which epochs become candidate models.

Training stops at the first epoch whose validation loss strictly exceeds
its predecessor's. The best epoch is then the penultimate one of the
stopped run, and its two neighbours (prev/next) are retained as candidate
models too. When the loss never rises within the epoch budget, the final
epoch is best and there is no next epoch.

Epoch numbers are 1-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class EpochSelection:
    stopped_epoch: int  # number of completed epochs
    best_ep: int
    prev_ep: int | None
    next_ep: int | None
    stopped_early: bool


def select_epochs(val_losses: list[float]) -> EpochSelection:
    """Apply the stopping rule to a recorded validation-loss trace.

    Pure function of the trace: usable on fixtures without any training.
    """
    if not val_losses:
        raise ValueError("empty loss trace")
    for epoch in range(2, len(val_losses) + 1):
        if val_losses[epoch - 1] > val_losses[epoch - 2]:
            best = epoch - 1
            return EpochSelection(
                stopped_epoch=epoch,
                best_ep=best,
                prev_ep=best - 1 if best >= 2 else None,
                next_ep=epoch,
                stopped_early=True,
            )
    last = len(val_losses)
    return EpochSelection(
        stopped_epoch=last,
        best_ep=last,
        prev_ep=last - 1 if last >= 2 else None,
        next_ep=None,
        stopped_early=False,
    )


def should_stop(val_losses: list[float]) -> bool:
    """True once the latest completed epoch triggers the stopping rule."""
    return len(val_losses) >= 2 and val_losses[-1] > val_losses[-2]


@dataclass(frozen=True)
class TrainProtocolConfig:
    """Knobs of the training protocol.

    The encoder is pluggable by id (see encoders.build_encoder). The loss
    is either plain BCE or its rebalanced focal extension; gamma and the
    rebalancing shape parameters are exposed because no canonical values
    exist for this task.
    """

    encoder: str = "tiny"
    max_epochs: int = 10
    seeds: tuple[int, ...] = (11, 21, 31, 41, 51, 61)
    loss: str = "R-BCE-FL"  # or "BCE"
    focal_gamma: float = 2.0
    rebalance: bool = True
    rebalance_alpha: float = 0.1
    rebalance_beta: float = 10.0
    rebalance_mu: float = 0.3
    epoch_choice: str = "next"  # prev | best | next
    batch_size: int = 16
    learning_rate: float = 1e-3
    split_seed: int | None = None  # split ws_dev here only if no ws_train/ws_val

    def __post_init__(self) -> None:
        if self.max_epochs < 3:
            raise ValueError("max_epochs must be at least 3")
        if not self.seeds:
            raise ValueError("seed list must be non-empty")
        if self.loss not in ("BCE", "R-BCE-FL"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.epoch_choice not in ("prev", "best", "next"):
            raise ValueError(f"unknown epoch choice {self.epoch_choice!r}")

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainProtocolConfig":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in obj.items() if k in known}
        if "seeds" in kwargs:
            kwargs["seeds"] = tuple(int(s) for s in kwargs["seeds"])
        return cls(**kwargs)
