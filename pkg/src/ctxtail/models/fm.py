"""Degree-2 factorization machine trained with minibatch SGD on the logistic loss."""

from __future__ import annotations

import numpy as np

from .linear import sigmoid, sample_weights


def fm_raw_score(w0: float, w: np.ndarray, V: np.ndarray, X: np.ndarray) -> np.ndarray:
    """w0 + Xw + 1/2 * sum_f [(XV_f)^2 - X^2 V_f^2]; V may have zero factors."""
    linear = X @ w + w0
    if V.shape[1] == 0:
        return linear
    XV = X @ V
    X2V2 = (X**2) @ (V**2)
    return linear + 0.5 * (XV**2 - X2V2).sum(axis=1)


def fm_loss_grad(
    w0: float,
    w: np.ndarray,
    V: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    sw: np.ndarray,
    l2: float,
) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Weighted mean logistic loss with L2 on w and V; returns (loss, g_w0, g_w, g_V)."""
    z = fm_raw_score(w0, w, V, X)
    p = sigmoid(z)
    eps = 1e-12
    total_w = sw.sum()
    loss = float(
        -(sw * (y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps))).sum() / total_w
        + 0.5 * l2 * (w @ w + float((V * V).sum()))
    )
    resid = sw * (p - y) / total_w  # dL/dz per sample
    g_w0 = float(resid.sum())
    g_w = X.T @ resid + l2 * w
    if V.shape[1] == 0:
        g_V = np.zeros_like(V)
    else:
        XV = X @ V
        # d z_i / d V_jf = x_ij * (XV)_if - V_jf * x_ij^2
        g_V = X.T @ (resid[:, None] * XV) - V * ((X**2).T @ resid)[:, None] + l2 * V
    return loss, g_w0, g_w, g_V


class FactorizationMachine:
    def __init__(
        self,
        n_factors: int = 8,
        lr: float = 0.05,
        l2: float = 1e-4,
        epochs: int = 30,
        batch_size: int = 64,
        init_scale: float = 0.01,
        class_weight: bool = True,
        seed: int = 0,
    ):
        self.n_factors = n_factors
        self.lr = lr
        self.l2 = l2
        self.epochs = epochs
        self.batch_size = batch_size
        self.init_scale = init_scale
        self.class_weight = class_weight
        self.seed = seed
        self.w0 = 0.0
        self.w: np.ndarray | None = None
        self.V: np.ndarray | None = None
        self.loss_curve: list[float] = []

    def fit(self, X: np.ndarray, y: np.ndarray) -> "FactorizationMachine":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).ravel()
        n, d = X.shape
        sw = sample_weights(y, self.class_weight)
        rng = np.random.default_rng(self.seed)
        self.w0 = 0.0
        self.w = np.zeros(d)
        self.V = self.init_scale * rng.standard_normal((d, self.n_factors))
        self.loss_curve = []
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                _, g0, gw, gV = fm_loss_grad(self.w0, self.w, self.V, X[idx], y[idx], sw[idx], self.l2)
                self.w0 -= self.lr * g0
                self.w -= self.lr * gw
                self.V -= self.lr * gV
            loss, *_ = fm_loss_grad(self.w0, self.w, self.V, X, y, sw, self.l2)
            self.loss_curve.append(loss)
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return fm_raw_score(self.w0, self.w, self.V, np.asarray(X, dtype=np.float64))

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.decision_function(X))
