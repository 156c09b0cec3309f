"""Logistic regression by full-batch gradient descent and closed-form ridge.

Both consume standardized features.  The L2 penalty applies to the
weights only, never the bias.
"""

from __future__ import annotations

import numpy as np

from .base import ModelError


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def fit_logreg(X: np.ndarray, y: np.ndarray, hyper: dict) -> dict:
    """Minimize mean log loss + l2/(2n) ||w||^2 with plain gradient descent.

    The step size is 1/L for the objective's Lipschitz bound
    L = sigma_max(X~)^2 / (4n) + l2/n, which guarantees descent.
    """
    n, k = X.shape
    lam = float(hyper["l2"])
    Xb = np.column_stack([X, np.ones(n)])
    sigma_max = np.linalg.norm(Xb, 2)
    lipschitz = sigma_max**2 / (4.0 * n) + lam / n
    step = 1.0 / lipschitz
    theta = np.zeros(k + 1)
    tol = float(hyper["tol"])
    for _ in range(int(hyper["max_iter"])):
        p = _sigmoid(Xb @ theta)
        grad = Xb.T @ (p - y) / n
        grad[:k] += lam * theta[:k] / n
        if np.max(np.abs(grad)) < tol:
            break
        theta = theta - step * grad
    return {"weights": theta[:k].tolist(), "bias": float(theta[k])}


def predict_logreg(params: dict, X: np.ndarray) -> np.ndarray:
    w = np.asarray(params["weights"])
    return _sigmoid(X @ w + params["bias"])


def fit_ridge(X: np.ndarray, y: np.ndarray, hyper: dict) -> dict:
    """Normal equations with the penalty on weights, bias unpenalized."""
    n, k = X.shape
    lam = float(hyper["l2"])
    Xb = np.column_stack([X, np.ones(n)])
    gram = Xb.T @ Xb
    gram[np.arange(k), np.arange(k)] += lam
    rhs = Xb.T @ y
    try:
        theta = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise ModelError(
            "ridge system is singular; increase the l2 penalty"
        ) from exc
    if not np.all(np.isfinite(theta)):
        raise ModelError("ridge solution is not finite; increase the l2 penalty")
    return {"weights": theta[:k].tolist(), "bias": float(theta[k])}


def predict_ridge(params: dict, X: np.ndarray) -> np.ndarray:
    w = np.asarray(params["weights"])
    return X @ w + params["bias"]
