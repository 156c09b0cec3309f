"""Light-weight meta classification and regression models.

Five families behind one fit/predict surface:

  logreg  L2 log loss, full-batch gradient descent   (classification)
  ridge   closed-form normal equations               (regression)
  forest  bagged exact CART trees                    (both)
  gbt     stage-wise CART on residuals               (both)
  mlp     two hidden layers, mini-batch descent      (both)

Linear and mlp families train on standardized features (statistics are
stored in the model); tree families consume raw features.  Everything
is deterministic given (data, seed, hyperparameters).  Classification
outputs live in [0, 1]; regression predictions are clamped to [0, 1].
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..dataio import FeatureTable
from .base import (
    CLASSIFICATION_FAMILIES,
    DEFAULT_HYPER,
    FAMILIES,
    REGRESSION_FAMILIES,
    TASKS,
    MetaModel,
    ModelError,
    check_fit_inputs,
    load_model,
    resolve_hyper,
    save_model,
    standardization_stats,
)
from .linear import fit_logreg, fit_ridge, predict_logreg, predict_ridge
from .mlp import fit_mlp, predict_mlp
from .trees import fit_forest, fit_gbt, predict_forest, predict_gbt

__all__ = [
    "CLASSIFICATION_FAMILIES",
    "DEFAULT_HYPER",
    "FAMILIES",
    "REGRESSION_FAMILIES",
    "TASKS",
    "MetaModel",
    "ModelError",
    "fit",
    "fit_table",
    "predict",
    "predict_table",
    "save_model",
    "load_model",
]

_STANDARDIZED_FAMILIES = ("logreg", "ridge", "mlp")


def fit(
    task: str,
    family: str,
    X: np.ndarray,
    y: np.ndarray,
    feature_names: Sequence[str],
    hyper: dict | None = None,
    seed: int = 0,
) -> MetaModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    check_fit_inputs(task, family, X, y)
    if X.shape[1] != len(feature_names):
        raise ModelError(
            f"{X.shape[1]} feature columns but {len(feature_names)} feature names"
        )
    merged = resolve_hyper(family, hyper)

    standardize = None
    Xf = X
    if family in _STANDARDIZED_FAMILIES:
        mean, std = standardization_stats(X)
        standardize = (mean, std)
        Xf = (X - mean) / std

    if family == "logreg":
        params = fit_logreg(Xf, y, merged)
    elif family == "ridge":
        params = fit_ridge(Xf, y, merged)
    elif family == "forest":
        params = fit_forest(Xf, y, merged, seed)
    elif family == "gbt":
        params = fit_gbt(Xf, y, merged, seed, task)
    elif family == "mlp":
        params = fit_mlp(Xf, y, merged, seed, task)
    else:
        raise ModelError(f"unknown model family {family!r}")

    return MetaModel(
        task=task,
        family=family,
        feature_names=tuple(feature_names),
        hyper=merged,
        seed=seed,
        standardize=standardize,
        params=params,
    )


def predict(model: MetaModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return np.zeros(0)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise ModelError(
            f"feature matrix width {X.shape[1] if X.ndim == 2 else X.shape} does not "
            f"match the model's {len(model.feature_names)} features"
        )
    Xf = model.apply_standardization(X)
    if model.family == "logreg":
        out = predict_logreg(model.params, Xf)
    elif model.family == "ridge":
        out = predict_ridge(model.params, Xf)
    elif model.family == "forest":
        out = predict_forest(model.params, Xf)
    elif model.family == "gbt":
        out = predict_gbt(model.params, Xf, model.task)
    elif model.family == "mlp":
        out = predict_mlp(model.params, Xf, model.task)
    else:
        raise ModelError(f"unknown model family {model.family!r}")
    if model.task == "regression":
        out = np.clip(out, 0.0, 1.0)
    return out


def fit_table(
    task: str,
    family: str,
    table: FeatureTable,
    hyper: dict | None = None,
    seed: int = 0,
) -> MetaModel:
    """Fit from a feature table; targets are tp (classification) or iou."""
    y = table.tp if task == "classification" else table.iou
    return fit(task, family, table.values, y, table.feature_names, hyper, seed)


def predict_table(model: MetaModel, table: FeatureTable) -> np.ndarray:
    if table.feature_names != model.feature_names:
        missing = [n for n in model.feature_names if n not in table.feature_names]
        if missing:
            raise ModelError(f"table lacks model features {missing!r}")
        table = table.select(model.feature_names)
    return predict(model, table.values)
