"""Greedy forward feature selection against a held-out split.

Starting from the empty set, each step refits one model per remaining
candidate on the training rows restricted to (selected + candidate),
scores it on the evaluation rows, and keeps the argmax.  Ties break by
canonical feature order.  Models are always fit with their columns in
canonical registry order, so running with budget = all candidates
reproduces the full-set model exactly (same features, same seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataio import FeatureTable, fmt17
from .metrics import auroc, r_squared
from .models import fit, predict

SELECTION_METRICS = {
    "auroc": auroc,
    "r_squared": r_squared,
}


def default_metric(task: str) -> str:
    return "auroc" if task == "classification" else "r_squared"


@dataclass
class SelectionTrace:
    """Chosen features in order with the metric after each addition."""

    metric: str
    family: str
    task: str
    steps: list[tuple[str, float]] = field(default_factory=list)
    full_set_value: float | None = None
    # Per-step candidate scores, retained so the argmax choice is auditable.
    step_scores: list[dict[str, float]] = field(default_factory=list)

    @property
    def selected(self) -> list[str]:
        return [name for name, _ in self.steps]


def _candidate_seed(master: int, step: int, candidate_index: int) -> int:
    seq = np.random.SeedSequence([master, step, candidate_index])
    return int(seq.generate_state(1)[0])


def _fit_and_score(
    task, family, metric_fn, train: FeatureTable, eval_: FeatureTable,
    names: Sequence[str], hyper, seed,
) -> float:
    # Canonical column order regardless of selection order.
    ordered = [n for n in train.feature_names if n in set(names)]
    sub_train = train.select(ordered)
    sub_eval = eval_.select(ordered)
    y_train = sub_train.tp if task == "classification" else sub_train.iou
    y_eval = sub_eval.tp if task == "classification" else sub_eval.iou
    model = fit(task, family, sub_train.values, y_train, ordered, hyper, seed)
    return float(metric_fn(predict(model, sub_eval.values), y_eval))


def greedy_select(
    train: FeatureTable,
    eval_: FeatureTable,
    candidates: Sequence[str] | None = None,
    budget: int = 10,
    task: str = "classification",
    family: str = "gbt",
    metric: str | None = None,
    hyper: dict | None = None,
    seed: int = 0,
) -> SelectionTrace:
    if candidates is None:
        candidates = train.feature_names
    candidates = list(candidates)
    if not 1 <= budget <= len(candidates):
        raise ValueError(f"budget must be in [1, {len(candidates)}], got {budget}")
    overlap = set(train.frame_ids) & set(eval_.frame_ids)
    if overlap:
        raise ValueError(
            f"train and eval rows share {len(overlap)} frame ids; splits must be disjoint"
        )
    metric = metric or default_metric(task)
    try:
        metric_fn = SELECTION_METRICS[metric]
    except KeyError:
        raise ValueError(f"unknown selection metric {metric!r}") from None

    trace = SelectionTrace(metric=metric, family=family, task=task)
    selected: list[str] = []
    remaining = list(candidates)
    for step in range(budget):
        scores: dict[str, float] = {}
        for cand in remaining:
            cand_seed = _candidate_seed(seed, step, candidates.index(cand))
            scores[cand] = _fit_and_score(
                task, family, metric_fn, train, eval_, selected + [cand], hyper, cand_seed
            )
        # Argmax with ties broken by canonical (candidate list) order.
        best = max(remaining, key=lambda name: (scores[name], -candidates.index(name)))
        selected.append(best)
        remaining.remove(best)
        trace.steps.append((best, scores[best]))
        trace.step_scores.append(scores)

    trace.full_set_value = _fit_and_score(
        task, family, metric_fn, train, eval_, candidates, hyper, seed
    )
    return trace


def write_trace(trace: SelectionTrace, path) -> None:
    lines = [
        f"# metric={trace.metric} family={trace.family} task={trace.task} "
        f"full_set={fmt17(trace.full_set_value) if trace.full_set_value is not None else 'nan'}",
        "step\tfeature\tmetric",
    ]
    for i, (name, value) in enumerate(trace.steps, start=1):
        lines.append(f"{i}\t{name}\t{fmt17(value)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
