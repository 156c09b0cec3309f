"""Two-hidden-layer perceptron trained by mini-batch gradient descent."""

from __future__ import annotations

import numpy as np

from .base import derive_seed


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _init_params(k: int, hidden: tuple[int, int], rng: np.random.Generator):
    h1, h2 = int(hidden[0]), int(hidden[1])
    dims = [(k, h1), (h1, h2), (h2, 1)]
    weights = [rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
               for fan_in, fan_out in dims]
    biases = [np.zeros(fan_out) for _, fan_out in dims]
    return weights, biases


def _forward(X, weights, biases):
    a1 = np.maximum(X @ weights[0] + biases[0], 0.0)
    a2 = np.maximum(a1 @ weights[1] + biases[1], 0.0)
    z = (a2 @ weights[2] + biases[2]).ravel()
    return a1, a2, z


def fit_mlp(X: np.ndarray, y: np.ndarray, hyper: dict, seed: int, task: str) -> dict:
    rng = derive_seed(seed)
    n, k = X.shape
    weights, biases = _init_params(k, tuple(hyper["hidden"]), rng)
    lr = float(hyper["learning_rate"])
    batch = min(int(hyper["batch_size"]), n)
    for _ in range(int(hyper["epochs"])):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            rows = order[start : start + batch]
            xb, yb = X[rows], y[rows]
            a1, a2, z = _forward(xb, weights, biases)
            if task == "classification":
                dz = (_sigmoid(z) - yb) / len(rows)
            else:
                dz = 2.0 * (z - yb) / len(rows)
            dz = dz[:, None]
            dw3 = a2.T @ dz
            da2 = (dz @ weights[2].T) * (a2 > 0.0)
            dw2 = a1.T @ da2
            da1 = (da2 @ weights[1].T) * (a1 > 0.0)
            dw1 = xb.T @ da1
            weights[2] -= lr * dw3
            biases[2] -= lr * dz.sum(axis=0)
            weights[1] -= lr * dw2
            biases[1] -= lr * da2.sum(axis=0)
            weights[0] -= lr * dw1
            biases[0] -= lr * da1.sum(axis=0)
    return {
        "weights": [w.tolist() for w in weights],
        "biases": [b.tolist() for b in biases],
    }


def predict_mlp(params: dict, X: np.ndarray, task: str) -> np.ndarray:
    weights = [np.asarray(w) for w in params["weights"]]
    biases = [np.asarray(b) for b in params["biases"]]
    _, _, z = _forward(X, weights, biases)
    if task == "classification":
        return _sigmoid(z)
    return z
