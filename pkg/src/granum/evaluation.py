"""Validity-filtered multi-label evaluation and report emission.

A document counts for a label only when it is valid for that label, so
per-label counts are taken over the label's valid documents alone and
predicted labels outside a document's valid set are removed before scoring
(validity filtering). Precision, recall, and F1 use the 0/0 -> 0
convention, flagged per label in the JSON output.

Three aggregate views are computed: label-based macro averages (with the
population variance across labels), label-based micro averages over the
summed counts, and an example-based F1 averaged over documents with any
true or predicted label among their valid ones.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import LabeledDataset

Predictions = Mapping[str, set[str]]


class EvaluationError(ValueError):
    pass


def read_predictions_jsonl(path: str | Path) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out.setdefault(obj["pmid"], set()).update(obj["labels"])
    return out


def write_predictions_jsonl(predictions: Predictions, path: str | Path) -> None:
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


def validity_filter(predictions: Predictions, dataset: LabeledDataset) -> dict[str, set[str]]:
    """Intersect each document's predicted labels with its valid labels."""
    rows = dataset.row_map()
    filtered: dict[str, set[str]] = {}
    for pmid, labels in predictions.items():
        row = rows.get(pmid)
        if row is None:
            raise EvaluationError(f"prediction for unknown pmid {pmid!r}")
        filtered[pmid] = set(labels) & row.valid_labels
    return filtered


def _safe_ratio(num: int, den: int) -> tuple[float, bool]:
    if den == 0:
        return 0.0, True
    return num / den, False


@dataclass(frozen=True)
class LabelScore:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    precision_undefined: bool  # no predictions for the label (0/0 -> 0)
    recall_undefined: bool  # no true positives or false negatives

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "LabelScore":
        p, p_undef = _safe_ratio(tp, tp + fp)
        r, r_undef = _safe_ratio(tp, tp + fn)
        f1 = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
        return cls(tp, fp, fn, p, r, f1, p_undef, r_undef)


@dataclass
class EvalResult:
    labels: tuple[str, ...]
    per_label: dict[str, LabelScore]
    ma_precision: float = 0.0
    ma_recall: float = 0.0
    ma_f1: float = 0.0
    ma_precision_var: float = 0.0
    ma_recall_var: float = 0.0
    ma_f1_var: float = 0.0
    mi_precision: float = 0.0
    mi_recall: float = 0.0
    mi_f1: float = 0.0
    example_f1: float | None = None
    example_docs: int = 0
    meta: dict = field(default_factory=dict)

    def finalize(self) -> "EvalResult":
        scores = [self.per_label[label] for label in self.labels]
        ps = np.array([s.precision for s in scores])
        rs = np.array([s.recall for s in scores])
        fs = np.array([s.f1 for s in scores])
        self.ma_precision = float(ps.mean())
        self.ma_recall = float(rs.mean())
        self.ma_f1 = float(fs.mean())
        # Population variance across labels, as reported next to each
        # macro-averaged figure.
        self.ma_precision_var = float(ps.var())
        self.ma_recall_var = float(rs.var())
        self.ma_f1_var = float(fs.var())
        tp = sum(s.tp for s in scores)
        fp = sum(s.fp for s in scores)
        fn = sum(s.fn for s in scores)
        self.mi_precision, _ = _safe_ratio(tp, tp + fp)
        self.mi_recall, _ = _safe_ratio(tp, tp + fn)
        denom = self.mi_precision + self.mi_recall
        self.mi_f1 = 2 * self.mi_precision * self.mi_recall / denom if denom > 0 else 0.0
        return self

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "per_label": {
                label: {
                    "tp": s.tp,
                    "fp": s.fp,
                    "fn": s.fn,
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "precision_undefined": s.precision_undefined,
                    "recall_undefined": s.recall_undefined,
                }
                for label, s in self.per_label.items()
            },
            "maP": self.ma_precision,
            "maP_var": self.ma_precision_var,
            "maR": self.ma_recall,
            "maR_var": self.ma_recall_var,
            "maF1": self.ma_f1,
            "maF1_var": self.ma_f1_var,
            "miP": self.mi_precision,
            "miR": self.mi_recall,
            "miF1": self.mi_f1,
            "exampleF1": self.example_f1,
            "example_docs": self.example_docs,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "EvalResult":
        per_label = {
            label: LabelScore(
                tp=int(s["tp"]),
                fp=int(s["fp"]),
                fn=int(s["fn"]),
                precision=s["precision"],
                recall=s["recall"],
                f1=s["f1"],
                precision_undefined=bool(s["precision_undefined"]),
                recall_undefined=bool(s["recall_undefined"]),
            )
            for label, s in obj["per_label"].items()
        }
        result = cls(labels=tuple(obj["labels"]), per_label=per_label)
        result.example_f1 = obj.get("exampleF1")
        result.example_docs = int(obj.get("example_docs", 0))
        result.meta = obj.get("meta", {})
        return result.finalize()


def score(
    predictions: Predictions,
    dataset: LabeledDataset,
    apply_validity: bool = True,
) -> EvalResult:
    """Score predictions against a dataset's positive labels.

    Validity filtering is applied internally by default. Per-label counts
    consider only documents valid for the label; documents absent from the
    prediction map count as predicting nothing.
    """
    if not dataset.labels:
        raise EvaluationError("dataset has an empty label set")
    preds = validity_filter(predictions, dataset) if apply_validity else {
        pmid: set(labels) for pmid, labels in predictions.items()
    }
    per_label: dict[str, LabelScore] = {}
    for label in dataset.labels:
        tp = fp = fn = 0
        for row in dataset.rows:
            if label not in row.valid_labels:
                continue
            truth = label in row.positive_labels
            predicted = label in preds.get(row.pmid, ())
            if predicted and truth:
                tp += 1
            elif predicted:
                fp += 1
            elif truth:
                fn += 1
        per_label[label] = LabelScore.from_counts(tp, fp, fn)

    terms = []
    for row in dataset.rows:
        y = row.positive_labels
        z = preds.get(row.pmid, set()) & row.valid_labels
        if not y and not z:
            continue
        terms.append(2 * len(y & z) / (len(y) + len(z)))
    result = EvalResult(labels=dataset.labels, per_label=per_label)
    result.example_f1 = float(np.mean(terms)) if terms else 0.0
    result.example_docs = len(terms)
    return result.finalize()


def pool_results(results: Iterable[EvalResult], meta: dict | None = None) -> EvalResult:
    """Recompute aggregates over the union of per-label counts.

    Labels must be disjoint across results (one result per year). The
    example-based F1 cannot be pooled from counts and is left unset.
    """
    per_label: dict[str, LabelScore] = {}
    for result in results:
        for label, s in result.per_label.items():
            if label in per_label:
                raise EvaluationError(f"label {label!r} appears in multiple results")
            per_label[label] = s
    pooled = EvalResult(
        labels=tuple(sorted(per_label)), per_label=per_label, meta=meta or {}
    )
    pooled.example_f1 = None
    return pooled.finalize()


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank test
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WilcoxonResult:
    w_plus: float  # sum of ranks of positive differences (b - a)
    n_nonzero: int
    p_value: float
    alternative: str
    method: str  # exact | normal | degenerate


EXACT_LIMIT = 25


def wilcoxon_signed_rank(
    a: Sequence[float], b: Sequence[float], alternative: str = "greater"
) -> WilcoxonResult:
    """Paired signed-rank test on differences b - a.

    Zero differences are excluded; tied magnitudes share average ranks.
    The exact permutation distribution is used for up to 25 non-zero
    pairs, the normal approximation with continuity correction beyond.
    ``alternative='greater'`` tests whether b tends to exceed a.
    """
    if len(a) != len(b):
        raise EvaluationError("paired samples must have equal length")
    if alternative not in ("greater", "less", "two-sided"):
        raise EvaluationError(f"unknown alternative {alternative!r}")
    diffs = [bi - ai for ai, bi in zip(a, b) if bi != ai]
    n = len(diffs)
    if n == 0:
        # All differences zero: no evidence either way.
        return WilcoxonResult(0.0, 0, 1.0, alternative, "degenerate")

    magnitudes = sorted((abs(d), i) for i, d in enumerate(diffs))
    ranks = [0.0] * n
    pos = 0
    while pos < n:
        end = pos
        while end + 1 < n and magnitudes[end + 1][0] == magnitudes[pos][0]:
            end += 1
        avg_rank = (pos + end) / 2 + 1
        for k in range(pos, end + 1):
            ranks[magnitudes[k][1]] = avg_rank
        pos = end + 1
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)

    if n <= EXACT_LIMIT:
        p = _exact_p(ranks, w_plus, alternative)
        method = "exact"
    else:
        p = _normal_p(ranks, w_plus, n, alternative)
        method = "normal"
    return WilcoxonResult(w_plus, n, p, alternative, method)


def _exact_p(ranks: Sequence[float], w_plus: float, alternative: str) -> float:
    # Average ranks are multiples of 1/2; doubling makes them integers, so
    # the permutation distribution tabulates exactly.
    r2 = [round(2 * r) for r in ranks]
    total = sum(r2)
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in r2:
        for w in range(total - r, -1, -1):
            if counts[w]:
                counts[w + r] += counts[w]
    w2 = round(2 * w_plus)
    denom = 2 ** len(ranks)
    p_ge = sum(counts[w2:]) / denom
    p_le = sum(counts[: w2 + 1]) / denom
    if alternative == "greater":
        return p_ge
    if alternative == "less":
        return p_le
    return min(1.0, 2 * min(p_ge, p_le))


def _normal_p(ranks: Sequence[float], w_plus: float, n: int, alternative: str) -> float:
    mean = n * (n + 1) / 4
    var = n * (n + 1) * (2 * n + 1) / 24
    # Tie correction over groups of equal magnitudes.
    seen: dict[float, int] = {}
    for r in ranks:
        seen[r] = seen.get(r, 0) + 1
    for count in seen.values():
        if count > 1:
            var -= (count**3 - count) / 48
    sd = math.sqrt(var)

    def phi(z: float) -> float:
        return 0.5 * math.erfc(-z / math.sqrt(2))

    p_ge = 1 - phi((w_plus - mean - 0.5) / sd)
    p_le = phi((w_plus - mean + 0.5) / sd)
    if alternative == "greater":
        return p_ge
    if alternative == "less":
        return p_le
    return min(1.0, 2 * min(p_ge, p_le))


@dataclass(frozen=True)
class ComparisonReport:
    label_count: int
    f1_a: float
    f1_b: float
    wilcoxon: WilcoxonResult


def compare(
    result_a: EvalResult, result_b: EvalResult, alternative: str = "greater"
) -> ComparisonReport:
    """Significance of the per-label F1 difference between two results.

    With the default alternative the test asks whether result_b improves
    on result_a.
    """
    if set(result_a.labels) != set(result_b.labels):
        raise EvaluationError("results cover different label sets")
    labels = sorted(result_a.labels)
    if len(labels) < 6:
        raise EvaluationError("need at least 6 labels for a meaningful comparison")
    f1_a = [result_a.per_label[l].f1 for l in labels]
    f1_b = [result_b.per_label[l].f1 for l in labels]
    return ComparisonReport(
        label_count=len(labels),
        f1_a=result_a.ma_f1,
        f1_b=result_b.ma_f1,
        wilcoxon=wilcoxon_signed_rank(f1_a, f1_b, alternative),
    )


# ---------------------------------------------------------------------------
# Report tables
# ---------------------------------------------------------------------------

_TSV_COLUMNS = (
    "model",
    "maP",
    "maP_var",
    "maR",
    "maR_var",
    "maF1",
    "maF1_var",
    "miP",
    "miR",
    "miF1",
)


def write_report_tsv(rows: Sequence[tuple[str, EvalResult]], path: str | Path) -> None:
    """One row per scored model, three-decimal rounding."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("\t".join(_TSV_COLUMNS) + "\n")
        for name, result in rows:
            cells = [
                name,
                f"{result.ma_precision:.3f}",
                f"{result.ma_precision_var:.3f}",
                f"{result.ma_recall:.3f}",
                f"{result.ma_recall_var:.3f}",
                f"{result.ma_f1:.3f}",
                f"{result.ma_f1_var:.3f}",
                f"{result.mi_precision:.3f}",
                f"{result.mi_recall:.3f}",
                f"{result.mi_f1:.3f}",
            ]
            fh.write("\t".join(cells) + "\n")


def write_report_json(rows: Sequence[tuple[str, EvalResult]], path: str | Path) -> None:
    """Full-precision companion of the TSV table."""
    payload = {name: result.to_dict() for name, result in rows}
    Path(path).write_text(
        json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )
