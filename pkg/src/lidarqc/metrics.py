"""Evaluation statistics: accuracy, AUROC, R^2, calibration, correlations.

AUROC uses the rank formulation P(s+ > s-) + 0.5 P(s+ = s-) via
mid-ranks, so it is exactly invariant under strictly increasing score
transforms.  Calibration uses equal-width bins over [0, 1], right-closed
at 1.0; a probability exactly on an interior edge joins the upper bin,
and empty bins are excluded from both ECE and MCE.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import FeatureTable, fmt17


class MetricError(Exception):
    """Metric undefined for the given inputs (e.g. single-class labels)."""


def _as_arrays(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise MetricError(f"inputs must be equal-length vectors, got {a.shape} and {b.shape}")
    return a, b


def accuracy(pred_probs, labels, threshold: float = 0.5) -> float:
    probs, y = _as_arrays(pred_probs, labels)
    if probs.size == 0:
        raise MetricError("accuracy is undefined on empty input")
    return float(np.mean((probs >= threshold) == (y == 1.0)))


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores, labels) -> float:
    scores, y = _as_arrays(scores, labels)
    n_pos = int(np.count_nonzero(y == 1.0))
    n_neg = int(np.count_nonzero(y == 0.0))
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUROC is undefined without both classes")
    ranks = _midranks(scores)
    rank_sum = float(np.sum(ranks[y == 1.0]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def r_squared(estimates, targets) -> float:
    est, y = _as_arrays(estimates, targets)
    if est.size < 2:
        raise MetricError("R^2 needs at least 2 samples")
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot == 0.0:
        raise MetricError("R^2 is undefined for zero target variance")
    ss_res = float(np.sum((y - est) ** 2))
    return 1.0 - ss_res / ss_tot


@dataclass
class ReliabilityBin:
    lo: float
    hi: float
    count: int
    mean_confidence: float  # nan when empty
    accuracy: float  # nan when empty


def calibration(pred_probs, labels, bins: int = 10) -> tuple[float, float, list[ReliabilityBin]]:
    """(ECE, MCE, per-bin reliability table) over equal-width bins."""
    probs, y = _as_arrays(pred_probs, labels)
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise MetricError("probabilities must lie in [0, 1]")
    # k/bins division so an edge equals the double a literal like 0.3 parses to.
    edges = np.arange(bins + 1) / bins
    idx = np.searchsorted(edges, probs, side="right") - 1
    idx = np.minimum(idx, bins - 1)  # 1.0 joins the top bin
    table = []
    ece = 0.0
    mce = 0.0
    n = len(probs)
    for b in range(bins):
        mask = idx == b
        count = int(np.count_nonzero(mask))
        if count == 0:
            table.append(ReliabilityBin(edges[b], edges[b + 1], 0, np.nan, np.nan))
            continue
        conf = float(np.mean(probs[mask]))
        acc = float(np.mean(y[mask]))
        gap = abs(acc - conf)
        ece += count / n * gap
        mce = max(mce, gap)
        table.append(ReliabilityBin(edges[b], edges[b + 1], count, conf, acc))
    return ece, mce, table


def confusion(pred_probs, labels, threshold: float = 0.5) -> dict:
    """2x2 counts of the meta decision (prob >= threshold) vs the label."""
    probs, y = _as_arrays(pred_probs, labels)
    pred = probs >= threshold
    truth = y == 1.0
    return {
        "tp": int(np.count_nonzero(pred & truth)),
        "fp": int(np.count_nonzero(pred & ~truth)),
        "fn": int(np.count_nonzero(~pred & truth)),
        "tn": int(np.count_nonzero(~pred & ~truth)),
    }


def pearson(feature_column, targets) -> float:
    x, y = _as_arrays(feature_column, targets)
    if x.size < 2:
        raise MetricError("correlation needs at least 2 samples")
    xc = x - np.mean(x)
    yc = y - np.mean(y)
    denom = np.sqrt(np.sum(xc**2) * np.sum(yc**2))
    if denom == 0.0:
        raise MetricError("correlation is undefined for zero variance")
    return float(np.clip(np.sum(xc * yc) / denom, -1.0, 1.0))


@dataclass
class CorrelationTable:
    """Feature-to-target correlations sorted by absolute value, descending."""

    entries: list[tuple[str, float]] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)


def correlation_table(table: FeatureTable, targets=None) -> CorrelationTable:
    y = table.iou if targets is None else np.asarray(targets, dtype=float)
    out = CorrelationTable()
    for name in table.feature_names:
        try:
            out.entries.append((name, pearson(table.column(name), y)))
        except MetricError:
            out.skipped.append(name)
    out.entries.sort(key=lambda e: (-abs(e[1]), e[0]))
    return out


# ---------------------------------------------------------------------------
# evaluation reports
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    task: str
    feature_set: str
    family: str
    n_samples: int
    accuracy: float | None = None
    auroc: float | None = None
    r_squared: float | None = None
    ece: float | None = None
    mce: float | None = None
    confusion: dict | None = None
    reliability: list[ReliabilityBin] | None = None


def evaluate_classifier(
    probs, labels, feature_set: str = "", family: str = "", bins: int = 10
) -> EvalReport:
    probs, y = _as_arrays(probs, labels)
    ece, mce, table = calibration(probs, y, bins)
    counts = confusion(probs, y)
    report = EvalReport(
        task="classification",
        feature_set=feature_set,
        family=family,
        n_samples=len(y),
        accuracy=accuracy(probs, y),
        auroc=auroc(probs, y),
        ece=ece,
        mce=mce,
        confusion=counts,
        reliability=table,
    )
    assert sum(counts.values()) == report.n_samples
    return report


def evaluate_regressor(
    estimates, targets, feature_set: str = "", family: str = ""
) -> EvalReport:
    est, y = _as_arrays(estimates, targets)
    return EvalReport(
        task="regression",
        feature_set=feature_set,
        family=family,
        n_samples=len(y),
        r_squared=r_squared(est, y),
    )


def write_report(report: EvalReport, path) -> None:
    """One metric per line: key <TAB> value."""
    lines = [
        f"task\t{report.task}",
        f"feature_set\t{report.feature_set}",
        f"family\t{report.family}",
        f"n_samples\t{report.n_samples}",
    ]
    for key in ("accuracy", "auroc", "r_squared", "ece", "mce"):
        value = getattr(report, key)
        if value is not None:
            lines.append(f"{key}\t{fmt17(value)}")
    if report.confusion is not None:
        for key in ("tp", "fp", "fn", "tn"):
            lines.append(f"confusion_{key}\t{report.confusion[key]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_report(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        key, value = line.split("\t", 1)
        out[key] = value
    return out


def reliability_export(report: EvalReport, path) -> None:
    """Columnar dump of the reliability table for external plotting."""
    lines = ["bin_lo\tbin_hi\tcount\tmean_confidence\taccuracy"]
    for b in report.reliability or []:
        lines.append(
            "\t".join(
                [fmt17(b.lo), fmt17(b.hi), str(b.count), fmt17(b.mean_confidence), fmt17(b.accuracy)]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def scatter_export(estimates, targets, path) -> None:
    """True-vs-estimated overlap pairs, one row per prediction."""
    est, y = _as_arrays(estimates, targets)
    lines = ["target_iou\testimated_iou"]
    for t, e in zip(y, est):
        lines.append(f"{fmt17(t)}\t{fmt17(e)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def correlation_export(table: CorrelationTable, path) -> None:
    lines = ["feature\tpearson_r"]
    for name, r in table.entries:
        lines.append(f"{name}\t{fmt17(r)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
