"""Shared model container, validation, and serialization."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MODEL_FORMAT = "lidarqc-model-v1"

TASKS = ("classification", "regression")
FAMILIES = ("logreg", "ridge", "forest", "gbt", "mlp")

CLASSIFICATION_FAMILIES = ("logreg", "forest", "gbt", "mlp")
REGRESSION_FAMILIES = ("ridge", "forest", "gbt", "mlp")

DEFAULT_HYPER = {
    "logreg": {"l2": 1.0, "max_iter": 10_000, "tol": 1e-8},
    "ridge": {"l2": 1.0},
    "forest": {
        "n_trees": 100,
        "max_depth": 12,
        "row_subsample": 0.8,
        "feature_subsample": "sqrt",
        "min_leaf": 5,
    },
    "gbt": {"n_trees": 200, "max_depth": 3, "learning_rate": 0.1, "min_leaf": 5},
    "mlp": {
        "hidden": (64, 32),
        "learning_rate": 1e-3,
        "epochs": 200,
        "batch_size": 256,
    },
}


class ModelError(Exception):
    pass


@dataclass
class MetaModel:
    """A fitted meta classifier or regressor with its replay context.

    standardize holds the training-set per-feature (mean, std) for the
    families that consume standardized inputs, None for tree families.
    params is the family-specific parameter payload, already in
    JSON-serializable form.
    """

    task: str
    family: str
    feature_names: tuple[str, ...]
    hyper: dict
    seed: int
    standardize: tuple[np.ndarray, np.ndarray] | None
    params: dict

    def apply_standardization(self, X: np.ndarray) -> np.ndarray:
        if self.standardize is None:
            return X
        mean, std = self.standardize
        return (X - mean) / std


def resolve_hyper(family: str, hyper: dict | None) -> dict:
    if family not in DEFAULT_HYPER:
        raise ModelError(f"unknown model family {family!r}")
    merged = dict(DEFAULT_HYPER[family])
    for key, value in (hyper or {}).items():
        if key not in merged:
            raise ModelError(f"unknown hyperparameter {key!r} for family {family!r}")
        merged[key] = value
    for key, value in merged.items():
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            if value is not None and value <= 0:
                raise ModelError(f"hyperparameter {key}={value} must be positive")
    return merged


def check_fit_inputs(task: str, family: str, X: np.ndarray, y: np.ndarray) -> None:
    if task not in TASKS:
        raise ModelError(f"unknown task {task!r}")
    allowed = CLASSIFICATION_FAMILIES if task == "classification" else REGRESSION_FAMILIES
    if family not in allowed:
        raise ModelError(f"family {family!r} does not support task {task!r}")
    if X.ndim != 2:
        raise ModelError(f"feature matrix must be 2-D, got shape {X.shape}")
    if X.shape[0] < 2:
        raise ModelError(f"need at least 2 rows to fit, got {X.shape[0]}")
    if y.shape != (X.shape[0],):
        raise ModelError(f"targets shape {y.shape} does not match {X.shape[0]} rows")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ModelError("non-finite values in features or targets")
    if task == "classification":
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise ModelError("classification targets must be binary")
    else:
        if np.any(y < 0.0) or np.any(y > 1.0):
            raise ModelError("regression targets must lie in [0, 1]")


def standardization_stats(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)  # constant columns pass through
    return mean, std


def _canonical_payload(model: MetaModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "task": model.task,
        "family": model.family,
        "feature_names": list(model.feature_names),
        "hyper": {k: list(v) if isinstance(v, tuple) else v for k, v in model.hyper.items()},
        "seed": model.seed,
        "standardize": (
            None
            if model.standardize is None
            else [model.standardize[0].tolist(), model.standardize[1].tolist()]
        ),
        "params": model.params,
    }


def save_model(model: MetaModel, path) -> None:
    payload = _canonical_payload(model)
    body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    checksum = hashlib.sha256(body.encode("utf-8")).hexdigest()
    doc = {"checksum": checksum, "payload": payload}
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def load_model(path) -> MetaModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelError(f"{path}: not a valid model file ({exc})") from exc
    if not isinstance(doc, dict) or "payload" not in doc or "checksum" not in doc:
        raise ModelError(f"{path}: not a valid model file (missing payload/checksum)")
    payload = doc["payload"]
    body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    checksum = hashlib.sha256(body.encode("utf-8")).hexdigest()
    if checksum != doc["checksum"]:
        raise ModelError(f"{path}: checksum mismatch, file is corrupted")
    if payload.get("format") != MODEL_FORMAT:
        raise ModelError(
            f"{path}: model format {payload.get('format')!r} is not {MODEL_FORMAT!r}"
        )
    standardize = payload["standardize"]
    if standardize is not None:
        standardize = (np.array(standardize[0]), np.array(standardize[1]))
    hyper = {
        k: tuple(v) if isinstance(v, list) else v for k, v in payload["hyper"].items()
    }
    return MetaModel(
        task=payload["task"],
        family=payload["family"],
        feature_names=tuple(payload["feature_names"]),
        hyper=hyper,
        seed=payload["seed"],
        standardize=standardize,
        params=payload["params"],
    )


def derive_seed(*parts: int) -> np.random.Generator:
    """Deterministic generator from structured seed material."""
    return np.random.default_rng(np.random.SeedSequence(list(parts)))
