"""Combine labeling-function votes into enhanced weak labels.

Three combiners are provided: strict majority voting (MV), at-least-one
voting (ALO), and a per-label probabilistic two-coin label model (LM)
fitted with EM. Non-matches are explicit negative votes, not abstains:
every labeling function votes on every row of the matrix.

The label model treats the unknown true label of each row as a latent
binary variable. Each labeling function j has a sensitivity s_j (chance of
voting 1 on a true positive) and a specificity t_j (chance of voting 0 on
a true negative); votes are conditionally independent given the truth.
"""

from __future__ import annotations

import itertools
import json
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .labelers import LF_IDS, Vote

MIN_VOTERS = 2
MIN_VOTERS_LM = 3


@dataclass(frozen=True)
class VoteMatrix:
    """Binary votes for one label: rows are pmids, columns labeling functions."""

    label: str
    lf_ids: tuple[str, ...]
    pmids: tuple[str, ...]
    values: np.ndarray  # shape (len(pmids), len(lf_ids)), dtype uint8

    def __post_init__(self) -> None:
        if len(set(self.pmids)) != len(self.pmids):
            raise ValueError("duplicate row keys in vote matrix")
        if self.values.shape != (len(self.pmids), len(self.lf_ids)):
            raise ValueError("vote matrix shape mismatch")
        if self.values.size and not np.isin(self.values, (0, 1)).all():
            raise ValueError("votes must be binary")

    @property
    def n_rows(self) -> int:
        return len(self.pmids)

    @property
    def n_cols(self) -> int:
        return len(self.lf_ids)

    def subset(self, lf_ids: Sequence[str]) -> "VoteMatrix":
        missing = [lf for lf in lf_ids if lf not in self.lf_ids]
        if missing:
            raise ValueError(f"labeling function {missing[0]!r} not in matrix")
        cols = [self.lf_ids.index(lf) for lf in lf_ids]
        return VoteMatrix(
            label=self.label,
            lf_ids=tuple(lf_ids),
            pmids=self.pmids,
            values=self.values[:, cols],
        )


def build_matrix(
    votes: Iterable[Vote], label: str, lf_ids: Sequence[str], pmids: Sequence[str]
) -> VoteMatrix:
    """Assemble a matrix for one label from a flat vote list.

    Rows are the given pmids (the documents valid for the label); a missing
    vote is an explicit 0.
    """
    lf_index = {lf: j for j, lf in enumerate(lf_ids)}
    row_index = {pmid: i for i, pmid in enumerate(pmids)}
    values = np.zeros((len(pmids), len(lf_ids)), dtype=np.uint8)
    for v in votes:
        if v.label != label or v.lf not in lf_index:
            continue
        i = row_index.get(v.pmid)
        if i is not None and v.value:
            values[i, lf_index[v.lf]] = 1
    return VoteMatrix(label=label, lf_ids=tuple(lf_ids), pmids=tuple(pmids), values=values)


@dataclass(frozen=True)
class EnhancedLabels:
    """(pmid, label) pairs assigned by an ensemble, with provenance."""

    method: str  # MV | ALO | LM
    lf_ids: tuple[str, ...]
    positives: frozenset[tuple[str, str]]

    def posmap(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {}
        for pmid, label in self.positives:
            out.setdefault(pmid, set()).add(label)
        return out


def merge_enhanced(parts: Iterable[EnhancedLabels]) -> EnhancedLabels:
    parts = list(parts)
    methods = {p.method for p in parts}
    lf_sets = {p.lf_ids for p in parts}
    if len(methods) != 1 or len(lf_sets) != 1:
        raise ValueError("cannot merge enhanced labels with mixed provenance")
    positives = frozenset().union(*(p.positives for p in parts))
    return EnhancedLabels(method=methods.pop(), lf_ids=lf_sets.pop(), positives=positives)


def combine_mv(matrix: VoteMatrix) -> EnhancedLabels:
    """Assign iff strictly more than half of the voters vote 1."""
    if matrix.n_cols < MIN_VOTERS:
        raise ValueError(f"majority voting needs at least {MIN_VOTERS} voters")
    counts = matrix.values.sum(axis=1)
    keep = counts * 2 > matrix.n_cols
    positives = frozenset(
        (matrix.pmids[i], matrix.label) for i in np.flatnonzero(keep)
    )
    return EnhancedLabels(method="MV", lf_ids=matrix.lf_ids, positives=positives)


def combine_alo(matrix: VoteMatrix) -> EnhancedLabels:
    """Assign iff at least one voter votes 1 (the union of positives)."""
    if matrix.n_cols < MIN_VOTERS:
        raise ValueError(f"at-least-one voting needs at least {MIN_VOTERS} voters")
    keep = matrix.values.any(axis=1)
    positives = frozenset(
        (matrix.pmids[i], matrix.label) for i in np.flatnonzero(keep)
    )
    return EnhancedLabels(method="ALO", lf_ids=matrix.lf_ids, positives=positives)


@dataclass(frozen=True)
class LabelModelConfig:
    max_iter: int = 500
    tol: float = 1e-6
    clamp_eps: float = 1e-4
    init_clamp: tuple[float, float] = (0.01, 0.99)
    validate: bool = False  # assert log-likelihood monotonicity each iteration


@dataclass
class LabelModelParams:
    label: str
    lf_ids: tuple[str, ...]
    prior: float
    sensitivity: np.ndarray  # s_j = P(vote=1 | true=1)
    specificity: np.ndarray  # t_j = P(vote=0 | true=0)
    n_iter: int = 0
    converged: bool = False
    log_likelihood_trace: list[float] = field(default_factory=list)


def _clamp(x, lo: float, hi: float):
    return np.clip(x, lo, hi)


def posterior(values: np.ndarray, params: LabelModelParams) -> np.ndarray:
    """P(true=1 | votes) for each row, by the Bayes product rule."""
    v = values.astype(np.float64)
    s = params.sensitivity
    t = params.specificity
    log_pos = np.log(params.prior) + v @ np.log(s) + (1 - v) @ np.log1p(-s)
    log_neg = np.log1p(-params.prior) + v @ np.log1p(-t) + (1 - v) @ np.log(t)
    return np.exp(log_pos - np.logaddexp(log_pos, log_neg))


def log_likelihood(values: np.ndarray, params: LabelModelParams) -> float:
    v = values.astype(np.float64)
    s = params.sensitivity
    t = params.specificity
    log_pos = np.log(params.prior) + v @ np.log(s) + (1 - v) @ np.log1p(-s)
    log_neg = np.log1p(-params.prior) + v @ np.log1p(-t) + (1 - v) @ np.log(t)
    return float(np.logaddexp(log_pos, log_neg).sum())


def fit_label_model(
    matrix: VoteMatrix, config: LabelModelConfig = LabelModelConfig()
) -> LabelModelParams:
    """Fit the two-coin model by EM, initialized from MV pseudo-labels.

    Iterates until the largest absolute parameter change drops below the
    tolerance or the iteration budget runs out. All parameters stay inside
    [clamp_eps, 1 - clamp_eps].
    """
    if matrix.n_cols < MIN_VOTERS_LM:
        raise ValueError(f"label model needs at least {MIN_VOTERS_LM} voters")
    if matrix.n_rows == 0:
        raise ValueError("label model needs at least one row")
    v = matrix.values.astype(np.float64)
    n, m = v.shape
    lo, hi = config.init_clamp
    eps = config.clamp_eps

    pseudo = (v.sum(axis=1) * 2 > m).astype(np.float64)
    pi = float(_clamp(pseudo.mean(), lo, hi))
    n_pos = pseudo.sum()
    n_neg = n - n_pos
    s = _clamp(
        (v[pseudo == 1].sum(axis=0) / n_pos) if n_pos else np.full(m, 0.5), lo, hi
    )
    t = _clamp(
        ((1 - v[pseudo == 0]).sum(axis=0) / n_neg) if n_neg else np.full(m, 0.5), lo, hi
    )

    params = LabelModelParams(
        label=matrix.label, lf_ids=matrix.lf_ids, prior=pi,
        sensitivity=np.asarray(s, dtype=np.float64),
        specificity=np.asarray(t, dtype=np.float64),
    )
    prev_ll = -np.inf
    for it in range(1, config.max_iter + 1):
        mu = posterior(matrix.values, params)
        if config.validate:
            ll = log_likelihood(matrix.values, params)
            if ll < prev_ll - 1e-9:
                raise AssertionError(
                    f"log-likelihood decreased: {prev_ll} -> {ll} at iteration {it}"
                )
            prev_ll = ll
            params.log_likelihood_trace.append(ll)
        mu_sum = mu.sum()
        neg_sum = n - mu_sum
        new_pi = float(_clamp(mu_sum / n, eps, 1 - eps))
        new_s = _clamp((mu @ v) / mu_sum, eps, 1 - eps) if mu_sum > 0 else params.sensitivity
        new_t = (
            _clamp(((1 - mu) @ (1 - v)) / neg_sum, eps, 1 - eps)
            if neg_sum > 0
            else params.specificity
        )
        delta = max(
            abs(new_pi - params.prior),
            float(np.abs(new_s - params.sensitivity).max()),
            float(np.abs(new_t - params.specificity).max()),
        )
        params.prior = new_pi
        params.sensitivity = np.asarray(new_s, dtype=np.float64)
        params.specificity = np.asarray(new_t, dtype=np.float64)
        params.n_iter = it
        if delta < config.tol:
            params.converged = True
            break
    return params


def apply_label_model(matrix: VoteMatrix, params: LabelModelParams) -> EnhancedLabels:
    """Assign iff the posterior strictly exceeds 0.5."""
    if params.lf_ids != matrix.lf_ids:
        raise ValueError("label model parameters were fitted for a different LF subset")
    mu = posterior(matrix.values, params)
    positives = frozenset(
        (matrix.pmids[i], matrix.label) for i in np.flatnonzero(mu > 0.5)
    )
    return EnhancedLabels(method="LM", lf_ids=matrix.lf_ids, positives=positives)


def combine(
    matrix: VoteMatrix, method: str, lm_config: LabelModelConfig = LabelModelConfig()
) -> EnhancedLabels:
    method = method.upper()
    if method == "MV":
        return combine_mv(matrix)
    if method == "ALO":
        return combine_alo(matrix)
    if method == "LM":
        return apply_label_model(matrix, fit_label_model(matrix, lm_config))
    raise ValueError(f"unknown ensemble method {method!r}")


def enumerate_combinations(
    lf_ids: Sequence[str] = LF_IDS, min_size: int = 2
) -> list[tuple[str, ...]]:
    """All subsets of size >= min_size, ordered by size then lexicographically.

    Nine labeling functions give 502 subsets at min_size 2 and 466 at 3.
    """
    if min_size not in (2, 3):
        raise ValueError("min_size must be 2 or 3")
    out = []
    for size in range(min_size, len(lf_ids) + 1):
        out.extend(itertools.combinations(lf_ids, size))
    return out


@dataclass(frozen=True)
class CombinationScore:
    lf_ids: tuple[str, ...]
    ma_f1: dict[str, float]  # per method
    mi_f1: dict[str, float]
    ma_f1_variance: float

    @property
    def best_ma_f1(self) -> float:
        return max(self.ma_f1.values())

    @property
    def best_mi_f1(self) -> float:
        return max(self.mi_f1.values())


def search_combinations(
    votes: Iterable[Vote],
    dataset,
    methods: Sequence[str] = ("MV", "ALO", "LM"),
    min_size: int = 2,
    lf_ids: Sequence[str] = LF_IDS,
    lm_config: LabelModelConfig = LabelModelConfig(),
) -> list[CombinationScore]:
    """Score every labeling-function subset under every ensemble method.

    ``dataset`` supplies the ground truth (a ``datasets.LabeledDataset``).
    The label model is skipped for two-voter subsets. Rows come back sorted
    by best macro F1 descending, then best micro F1 descending, then subset
    order.
    """
    from .evaluation import score  # local import to avoid a cycle

    votes = list(votes)
    methods = [m.upper() for m in methods]
    matrices = {
        label: build_matrix(votes, label, lf_ids, dataset.valid_pmids(label))
        for label in dataset.labels
    }
    rows: list[CombinationScore] = []
    for subset in enumerate_combinations(lf_ids, min_size):
        sub = {label: m.subset(subset) for label, m in matrices.items()}
        ma: dict[str, float] = {}
        mi: dict[str, float] = {}
        for method in methods:
            if method == "LM" and len(subset) < MIN_VOTERS_LM:
                continue
            positives: set[tuple[str, str]] = set()
            for label in dataset.labels:
                positives.update(combine(sub[label], method, lm_config).positives)
            predictions: dict[str, set[str]] = {pmid: set() for pmid in dataset.pmids}
            for pmid, label in positives:
                predictions[pmid].add(label)
            result = score(predictions, dataset)
            ma[method] = result.ma_f1
            mi[method] = result.mi_f1
        variance = float(np.var(list(ma.values()))) if ma else 0.0
        rows.append(
            CombinationScore(lf_ids=subset, ma_f1=ma, mi_f1=mi, ma_f1_variance=variance)
        )
    order = {lf: i for i, lf in enumerate(lf_ids)}
    rows.sort(
        key=lambda r: (
            -r.best_ma_f1,
            -r.best_mi_f1,
            len(r.lf_ids),
            tuple(order[lf] for lf in r.lf_ids),
        )
    )
    return rows


def write_combination_report(
    rows: Sequence[CombinationScore],
    path: str | Path,
    methods: Sequence[str] = ("MV", "ALO", "LM"),
) -> None:
    methods = [m.upper() for m in methods]
    columns = ["subset"]
    columns += [f"maF1_{m}" for m in methods]
    columns += ["maF1_var"]
    columns += [f"miF1_{m}" for m in methods]
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("\t".join(columns) + "\n")
        for row in rows:
            cells = [",".join(row.lf_ids)]
            cells += [
                f"{row.ma_f1[m]:.3f}" if m in row.ma_f1 else "" for m in methods
            ]
            cells.append(f"{row.ma_f1_variance:.3f}")
            cells += [
                f"{row.mi_f1[m]:.3f}" if m in row.mi_f1 else "" for m in methods
            ]
            fh.write("\t".join(cells) + "\n")


def write_enhanced_jsonl(enhanced: EnhancedLabels, path: str | Path) -> None:
    posmap = enhanced.posmap()
    with Path(path).open("w", encoding="utf-8") as fh:
        for pmid in sorted(posmap):
            fh.write(
                json.dumps(
                    {
                        "pmid": pmid,
                        "labels": sorted(posmap[pmid]),
                        "method": enhanced.method,
                        "lfs": list(enhanced.lf_ids),
                    },
                    ensure_ascii=False,
                    separators=(",", ":"),
                )
                + "\n"
            )


def read_enhanced_jsonl(path: str | Path) -> EnhancedLabels:
    method = None
    lf_ids: tuple[str, ...] = ()
    positives: set[tuple[str, str]] = set()
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            method = obj["method"]
            lf_ids = tuple(obj["lfs"])
            for label in obj["labels"]:
                positives.add((obj["pmid"], label))
    if method is None:
        raise ValueError(f"no enhanced labels in {path}")
    return EnhancedLabels(method=method, lf_ids=lf_ids, positives=frozenset(positives))
