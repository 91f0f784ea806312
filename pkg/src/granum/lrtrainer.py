"""Per-label logistic regression baseline.

Features are binary: presence of a lowercased token of the text (lexical)
or of a recognized concept identifier (semantic). For each label, the
top-k features by one-way ANOVA F-statistic are kept, an L2-regularized
model is fitted by full-batch gradient descent with backtracking line
search, and the predictions of six per-seed models are combined by strict
majority. l2_c is the inverse regularization strength: larger values mean
a weaker penalty.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .datasets import BalanceConfig, LabeledDataset, SplitPair, undersample
from .textutil import lowercase, unique_tokens

FEATURE_K_GRID = (5, 10, 100, 1000)
L2_C_GRID = (0.01, 0.1, 1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6, 1e9)
DEFAULT_SEEDS = (11, 21, 31, 41, 51, 61)
VOTE_PANEL = 6
VOTE_THRESHOLD = 4  # strict majority of six


class TrainerError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSpace:
    """Stable sorted feature ids: ``lex:<token>`` and ``sem:<cui>``."""

    ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.ids)) != len(self.ids):
            raise TrainerError("feature ids must be unique")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def index(self) -> dict[str, int]:
        return {fid: i for i, fid in enumerate(self.ids)}


def doc_feature_ids(text: str, occurrences: Iterable[str] = ()) -> set[str]:
    feats = {f"lex:{tok}" for tok in unique_tokens(lowercase(text))}
    feats.update(f"sem:{cui}" for cui in occurrences)
    return feats


def build_feature_space(
    dataset: LabeledDataset, occurrences: Mapping[str, Iterable[str]] | None = None
) -> tuple[FeatureSpace, dict[str, np.ndarray]]:
    """Feature space over a dataset plus per-document feature index arrays."""
    occurrences = occurrences or {}
    raw = {
        row.pmid: doc_feature_ids(row.text, occurrences.get(row.pmid, ()))
        for row in dataset.rows
    }
    all_ids = sorted(set().union(*raw.values())) if raw else []
    space = FeatureSpace(ids=tuple(all_ids))
    index = space.index
    features = {
        pmid: np.array(sorted(index[f] for f in fids), dtype=np.int64)
        for pmid, fids in raw.items()
    }
    return space, features


def vectorize(
    pmids: Sequence[str],
    features: Mapping[str, np.ndarray],
    selected: Sequence[int],
    n_features: int,
) -> np.ndarray:
    """Dense binary matrix over the selected feature columns."""
    col_of = np.full(n_features, -1, dtype=np.int64)
    for j, fidx in enumerate(selected):
        col_of[fidx] = j
    x = np.zeros((len(pmids), len(selected)), dtype=np.float64)
    for i, pmid in enumerate(pmids):
        cols = col_of[features[pmid]]
        cols = cols[cols >= 0]
        x[i, cols] = 1.0
    return x


def f_anova_select(
    dataset: LabeledDataset,
    label: str,
    k: int,
    space: FeatureSpace,
    features: Mapping[str, np.ndarray],
) -> list[int]:
    """Top-k feature indices by one-way ANOVA F between the two classes.

    Computed over the label's valid instances. A feature with zero
    within-class variance and differing class means ranks as infinite;
    ties break by ascending feature id. Requires both classes present.
    """
    valid_rows = [row for row in dataset.rows if label in row.valid_labels]
    y = np.array([1 if label in row.positive_labels else 0 for row in valid_rows])
    n1 = int(y.sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        raise TrainerError(f"label {label!r} has a single class among valid instances")
    n = n1 + n0
    c1 = np.zeros(len(space), dtype=np.float64)
    c0 = np.zeros(len(space), dtype=np.float64)
    for row, yi in zip(valid_rows, y):
        target = c1 if yi else c0
        target[features[row.pmid]] += 1.0

    m1 = c1 / n1
    m0 = c0 / n0
    m = (c1 + c0) / n
    ss_between = n1 * (m1 - m) ** 2 + n0 * (m0 - m) ** 2
    ss_within = (
        c1 * (1 - m1) ** 2
        + (n1 - c1) * m1**2
        + c0 * (1 - m0) ** 2
        + (n0 - c0) * m0**2
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        f_stat = (ss_between / 1.0) / (ss_within / (n - 2))
    f_stat = np.where(ss_within == 0, np.where(m1 != m0, np.inf, 0.0), f_stat)
    order = sorted(range(len(space)), key=lambda j: (-f_stat[j], space.ids[j]))
    return order[:k]


@dataclass
class LRModel:
    label: str
    feature_indices: tuple[int, ...]
    feature_ids: tuple[str, ...]
    weights: np.ndarray
    bias: float
    l2_c: float
    converged: bool
    n_iter: int
    seed: int | None = None
    loss_trace: tuple[float, ...] = ()

    def decision(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.decision(x) > 0


def _loss_grad(
    x: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, l2_c: float
) -> tuple[float, np.ndarray, float]:
    n = x.shape[0]
    z = x @ w + b
    # log(1 + e^z) - y z, computed stably.
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z)) + float(w @ w) / (2 * l2_c * n)
    p = 1.0 / (1.0 + np.exp(-z))
    resid = (p - y) / n
    grad_w = x.T @ resid + w / (l2_c * n)
    grad_b = float(resid.sum())
    return loss, grad_w, grad_b


def train_lr(
    x: np.ndarray,
    y: np.ndarray,
    label: str,
    feature_indices: Sequence[int],
    feature_ids: Sequence[str],
    l2_c: float,
    seed: int | None = None,
    max_iter: int = 1000,
    grad_tol: float = 1e-6,
) -> LRModel:
    """Minimize the L2-regularized logistic loss by gradient descent.

    Step sizes come from Armijo backtracking, so the loss never increases
    across accepted steps. Stops early once the gradient norm falls below
    the tolerance; otherwise the model is returned unconverged.
    """
    w = np.zeros(x.shape[1], dtype=np.float64)
    b = 0.0
    converged = False
    it = 0
    step = 1.0
    trace = []
    for it in range(1, max_iter + 1):
        loss, grad_w, grad_b = _loss_grad(x, y, w, b, l2_c)
        trace.append(loss)
        grad_norm = math.sqrt(float(grad_w @ grad_w) + grad_b * grad_b)
        if grad_norm < grad_tol:
            converged = True
            break
        # Backtracking from a step that grows gently after easy accepts.
        step = min(step * 2.0, 1e6)
        sq = grad_norm * grad_norm
        while step > 1e-18:
            new_w = w - step * grad_w
            new_b = b - step * grad_b
            new_loss, _, _ = _loss_grad(x, y, new_w, new_b, l2_c)
            if new_loss <= loss - 1e-4 * step * sq:
                break
            step *= 0.5
        w = w - step * grad_w
        b = b - step * grad_b
    return LRModel(
        label=label,
        feature_indices=tuple(feature_indices),
        feature_ids=tuple(feature_ids),
        weights=w,
        bias=b,
        l2_c=l2_c,
        converged=converged,
        n_iter=it,
        seed=seed,
        loss_trace=tuple(trace),
    )


def _binary_f1(truth: np.ndarray, predicted: np.ndarray) -> float:
    tp = int(np.sum(truth & predicted))
    fp = int(np.sum(~truth & predicted))
    fn = int(np.sum(truth & ~predicted))
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def grid_search(
    split: SplitPair,
    label: str,
    space: FeatureSpace,
    features: Mapping[str, np.ndarray],
    ks: Sequence[int] = FEATURE_K_GRID,
    cs: Sequence[float] = L2_C_GRID,
) -> tuple[int, float]:
    """(k, l2_c) maximizing F1 against the weak labels of the validation
    part. Ties prefer the smaller k, then the smaller l2_c."""
    train_valid = [r for r in split.train.rows if label in r.valid_labels]
    val_valid = [r for r in split.val.rows if label in r.valid_labels]
    if not train_valid or not val_valid:
        raise TrainerError(f"label {label!r} has no valid instances in the split")
    y_train = np.array(
        [1.0 if label in r.positive_labels else 0.0 for r in train_valid]
    )
    y_val = np.array([label in r.positive_labels for r in val_valid])
    best: tuple[float, int, float] | None = None
    for k in sorted(ks):
        selected = f_anova_select(split.train, label, k, space, features)
        ids = [space.ids[j] for j in selected]
        x_train = vectorize([r.pmid for r in train_valid], features, selected, len(space))
        x_val = vectorize([r.pmid for r in val_valid], features, selected, len(space))
        for c in sorted(cs):
            model = train_lr(x_train, y_train, label, selected, ids, c)
            f1 = _binary_f1(y_val, model.predict(x_val))
            if best is None or f1 > best[0]:
                best = (f1, k, c)
    assert best is not None
    return best[1], best[2]


def predict_voted(
    models: Sequence[LRModel],
    pmids: Sequence[str],
    features: Mapping[str, np.ndarray],
    n_features: int,
) -> set[str]:
    """pmids assigned the label by at least 4 of the 6 per-seed models."""
    if len(models) != VOTE_PANEL:
        raise TrainerError(f"expected {VOTE_PANEL} per-seed models, got {len(models)}")
    votes = np.zeros(len(pmids), dtype=np.int64)
    for model in models:
        x = vectorize(pmids, features, model.feature_indices, n_features)
        votes += model.predict(x).astype(np.int64)
    return {pmid for pmid, v in zip(pmids, votes) if v >= VOTE_THRESHOLD}


def train_and_predict(
    dev: LabeledDataset,
    test: LabeledDataset,
    occurrences: Mapping[str, Iterable[str]] | None = None,
    split_seed: int = 7,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    balance_n: float = 10.0,
    ks: Sequence[int] = FEATURE_K_GRID,
    cs: Sequence[float] = L2_C_GRID,
) -> dict[str, set[str]]:
    """Full baseline: split, grid search, six undersampled fits per label,
    majority-voted predictions on the test documents (valid ones only)."""
    from .datasets import split_90_10

    split = split_90_10(dev, split_seed)
    space, features = build_feature_space(dev, occurrences)
    test_features = {
        row.pmid: np.array(
            sorted(
                space.index[f]
                for f in doc_feature_ids(
                    row.text, (occurrences or {}).get(row.pmid, ())
                )
                if f in space.index
            ),
            dtype=np.int64,
        )
        for row in test.rows
    }
    predictions: dict[str, set[str]] = {row.pmid: set() for row in test.rows}
    for label in dev.labels:
        k, c = grid_search(split, label, space, features, ks, cs)
        models = []
        for seed in seeds:
            sampled = undersample(split.train, BalanceConfig(balance_n=balance_n, seed=seed))
            rows = [r for r in sampled.rows if label in r.valid_labels]
            y = np.array([1.0 if label in r.positive_labels else 0.0 for r in rows])
            selected = f_anova_select(sampled, label, k, space, features)
            ids = [space.ids[j] for j in selected]
            x = vectorize([r.pmid for r in rows], features, selected, len(space))
            models.append(train_lr(x, y, label, selected, ids, c, seed=seed))
        valid_pmids = test.valid_pmids(label)
        for pmid in predict_voted(models, valid_pmids, test_features, len(space)):
            predictions[pmid].add(label)
    return predictions
