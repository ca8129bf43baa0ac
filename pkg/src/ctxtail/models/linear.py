"""Logistic regression trained by full-batch gradient descent with L2."""

from __future__ import annotations

import numpy as np


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sample_weights(y: np.ndarray, balanced: bool) -> np.ndarray:
    if not balanced:
        return np.ones(y.size, dtype=np.float64)
    n_pos = max(int(y.sum()), 1)
    n_neg = max(y.size - int(y.sum()), 1)
    w = np.where(y == 1, y.size / (2.0 * n_pos), y.size / (2.0 * n_neg))
    return w.astype(np.float64)


def logreg_loss_grad(
    w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, sw: np.ndarray, l2: float
) -> tuple[float, np.ndarray, float]:
    """Weighted mean log-loss with L2 on the weights (not the intercept)."""
    z = X @ w + b
    p = sigmoid(z)
    eps = 1e-12
    losses = -(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps))
    total_w = sw.sum()
    loss = float((sw * losses).sum() / total_w + 0.5 * l2 * (w @ w))
    resid = sw * (p - y) / total_w
    grad_w = X.T @ resid + l2 * w
    grad_b = float(resid.sum())
    return loss, grad_w, grad_b


class LogisticRegression:
    """Full-batch gradient descent with step halving; loss is monotone non-increasing."""

    def __init__(
        self,
        lr: float = 1.0,
        l2: float = 1e-4,
        max_iter: int = 300,
        tol: float = 1e-9,
        class_weight: bool = True,
    ):
        self.lr = lr
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol
        self.class_weight = class_weight
        self.w: np.ndarray | None = None
        self.b: float = 0.0
        self.loss_curve: list[float] = []

    def fit(self, X: np.ndarray, y: np.ndarray) -> "LogisticRegression":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).ravel()
        sw = sample_weights(y, self.class_weight)
        w = np.zeros(X.shape[1], dtype=np.float64)
        b = 0.0
        lr = self.lr
        loss, gw, gb = logreg_loss_grad(w, b, X, y, sw, self.l2)
        self.loss_curve = [loss]
        for _ in range(self.max_iter):
            for _ in range(30):
                w_new = w - lr * gw
                b_new = b - lr * gb
                loss_new, gw_new, gb_new = logreg_loss_grad(w_new, b_new, X, y, sw, self.l2)
                if loss_new <= loss:
                    break
                lr *= 0.5
            else:
                break
            if loss - loss_new < self.tol:
                w, b, loss = w_new, b_new, loss_new
                self.loss_curve.append(loss)
                break
            w, b, loss, gw, gb = w_new, b_new, loss_new, gw_new, gb_new
            self.loss_curve.append(loss)
        self.w = w
        self.b = b
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.w + self.b

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.decision_function(X))
