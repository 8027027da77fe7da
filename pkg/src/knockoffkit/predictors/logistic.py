"""Ridge-penalised binary logistic regression fitted by damped Newton steps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

__all__ = ["LogisticModel", "fit_logistic", "SeparationError"]


class SeparationError(ValueError):
    """Raised when the data are perfectly separable and no ridge is applied."""


@dataclass
class LogisticModel:
    coef: np.ndarray
    intercept: float
    l2: float
    n_iter: int
    grad_norm: float

    def decision_function(self, X):
        return np.asarray(X, dtype=float) @ self.coef + self.intercept

    def predict_proba(self, X):
        p1 = expit(self.decision_function(X))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)

    def accuracy(self, X, Y) -> float:
        return float(np.mean(self.predict(X) == np.asarray(Y)))

    @property
    def has_gradients(self) -> bool:
        return True

    def input_gradient(self, x, cls: int = 1):
        """Gradient of the class logit; for class 0 the logit is the negation."""
        g = self.coef.copy()
        return g if cls == 1 else -g


def _loss(X, y, w, b, l2):
    eta = X @ w + b
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta) + 0.5 * l2 * (w @ w))


def fit_logistic(X, Y, l2: float = 1e-4, tol: float = 1e-8, max_iter: int = 200) -> LogisticModel:
    """Minimise ``mean log-loss + (l2/2) ||coef||^2`` (intercept unpenalised).

    Newton's method with a backtracking line search; stops once the gradient
    norm falls below ``tol``.

    Raises
    ------
    SeparationError
        If the classes are perfectly separable and ``l2 == 0``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(Y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be (n, p) with one label per row")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("labels must be 0/1")
    if l2 < 0:
        raise ValueError("l2 must be non-negative")
    n, p = X.shape
    A = np.hstack([X, np.ones((n, 1))])
    theta = np.zeros(p + 1)
    ybar = np.clip(y.mean(), 1e-12, 1 - 1e-12)
    theta[-1] = np.log(ybar / (1 - ybar))
    pen = np.full(p + 1, l2)
    pen[-1] = 0.0
    loss = _loss(X, y, theta[:-1], theta[-1], l2)
    gnorm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(A @ theta)
        grad = A.T @ (mu - y) / n + pen * theta
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            break
        wts = mu * (1.0 - mu)
        H = (A * wts[:, None]).T @ A / n + np.diag(pen)
        H[np.diag_indices_from(H)] += 1e-12
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = grad
        t = 1.0
        while t > 1e-12:
            cand = theta - t * step
            new_loss = _loss(X, y, cand[:-1], cand[-1], l2)
            if new_loss <= loss - 1e-4 * t * (grad @ step) or new_loss <= loss and t < 1e-6:
                break
            t *= 0.5
        if new_loss > loss:
            break
        theta, loss = cand, new_loss
        if l2 == 0 and np.linalg.norm(theta) > 1e4 / max(np.std(X), 1e-12):
            break
    if l2 == 0:
        margins = (2 * y - 1) * (A @ theta)
        # a strictly positive margin on every row means a separating hyperplane exists
        if np.all(margins > 0):
            raise SeparationError("classes are perfectly separable; use a positive l2 penalty")
    return LogisticModel(theta[:-1].copy(), float(theta[-1]), l2, it, gnorm)
