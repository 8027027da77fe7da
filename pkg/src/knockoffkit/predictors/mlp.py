"""Small fully connected ReLU classifier with softmax output, in numpy.

Trained with Adam on minibatches; every random choice (initialisation and
batch order) comes from one seeded generator, so a fit is reproducible bit
for bit. Exposes gradients of class logits with respect to the raw inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["MlpModel", "fit_mlp", "integrated_gradients", "TrainingDivergedError"]


class TrainingDivergedError(RuntimeError):
    pass


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


@dataclass
class MlpModel:
    """Trained network.

    Attributes
    ----------
    weights, biases : lists of arrays
        ``weights[k]`` has shape ``(fan_in, fan_out)``.
    x_mean, x_scale : arrays
        Input standardisation learned on the training data.
    classes : array
        Label values, in logit order.
    loss_history : list
        Mean training loss before training (entry 0) and after each epoch.
    """

    weights: list
    biases: list
    x_mean: np.ndarray
    x_scale: np.ndarray
    classes: np.ndarray
    loss_history: list = field(default_factory=list)
    feature_means: np.ndarray = None

    @property
    def has_gradients(self) -> bool:
        return True

    @property
    def n_classes(self) -> int:
        return self.classes.size

    def _forward(self, X):
        h = (np.asarray(X, dtype=float) - self.x_mean) / self.x_scale
        acts = [h]
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if k < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return acts

    def logits(self, X) -> np.ndarray:
        return self._forward(np.atleast_2d(X))[-1]

    def first_layer(self, X) -> np.ndarray:
        """Pre-activation of the first layer; affine in each input column."""
        return ((np.asarray(X, dtype=float) - self.x_mean) / self.x_scale) @ self.weights[0] + self.biases[0]

    def logits_from_first_layer(self, H, dtype=np.float64) -> np.ndarray:
        """Finish the forward pass from first-layer pre-activations ``H``."""
        h = np.asarray(H, dtype=dtype)
        for W, b in zip(self.weights[1:], self.biases[1:]):
            h = np.maximum(h, 0.0) @ W.astype(dtype) + b.astype(dtype)
        return h

    def predict_proba(self, X) -> np.ndarray:
        return np.exp(_log_softmax(self.logits(X)))

    def predict(self, X) -> np.ndarray:
        return self.classes[np.argmax(self.logits(X), axis=1)]

    def accuracy(self, X, Y) -> float:
        return float(np.mean(self.predict(X) == np.asarray(Y)))

    def input_gradient(self, X, cls=None) -> np.ndarray:
        """Gradient of a class logit with respect to the raw input.

        ``X`` may be a single vector or an (n, p) array. ``cls`` is a class
        index (into ``classes``), an array of per-row indices, or ``None`` for
        each row's predicted class.
        """
        single = np.ndim(X) == 1
        X = np.atleast_2d(np.asarray(X, dtype=float))
        acts = self._forward(X)
        n = X.shape[0]
        if cls is None:
            cls = np.argmax(acts[-1], axis=1)
        cls = np.broadcast_to(np.asarray(cls), (n,))
        g = np.zeros((n, self.n_classes))
        g[np.arange(n), cls] = 1.0
        for k in range(len(self.weights) - 1, -1, -1):
            g = g @ self.weights[k].T
            if k > 0:
                g = g * (acts[k] > 0)
        g = g / self.x_scale
        return g[0] if single else g


def _init(sizes, rng):
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _mean_loss(model, X, yi):
    lp = _log_softmax(model.logits(X))
    return float(-lp[np.arange(len(yi)), yi].mean())


def fit_mlp(X, Y, layers=(64, 64, 64), epochs: int = 100, lr: float = 1e-3, seed: int = 0,
            batch_size: int = 64, standardize: bool = True, weight_decay: float = 0.0) -> MlpModel:
    """Train a ReLU network with softmax cross-entropy.

    Parameters
    ----------
    X : (n, p) array
    Y : (n,) labels (any hashable values; sorted unique values become classes)
    layers : sequence of int
        Hidden widths; empty gives a linear softmax model.
    epochs, lr, batch_size : training schedule for Adam.
    seed : int
        Seeds initialisation and batch order.
    standardize : bool
        Standardise inputs with training-set mean and standard deviation.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y).reshape(-1)
    if X.ndim != 2 or X.shape[0] != Y.size:
        raise ValueError("X must be (n, p) with one label per row")
    classes, yi = np.unique(Y, return_inverse=True)
    n, p = X.shape
    n_classes = max(classes.size, 2)
    if classes.size < 2:
        classes = np.append(classes, classes[-1] + 1 if np.issubdtype(classes.dtype, np.number) else "_other")
    rng = np.random.default_rng(seed)
    if standardize:
        mean = X.mean(0)
        scale = X.std(0)
        scale = np.where(scale > 0, scale, 1.0)
    else:
        mean, scale = np.zeros(p), np.ones(p)
    sizes = [p, *[int(h) for h in layers], n_classes]
    weights, biases = _init(sizes, rng)
    model = MlpModel(weights, biases, mean, scale, classes, [], X.mean(0))
    params = weights + biases
    m1 = [np.zeros_like(q) for q in params]
    m2 = [np.zeros_like(q) for q in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    Xs = (X - mean) / scale
    model.loss_history.append(_mean_loss(model, X, yi))
    t = 0
    L = len(weights)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            h = Xs[idx]
            acts = [h]
            for k in range(L):
                h = h @ weights[k] + biases[k]
                if k < L - 1:
                    h = np.maximum(h, 0.0)
                acts.append(h)
            prob = np.exp(_log_softmax(h))
            prob[np.arange(idx.size), yi[idx]] -= 1.0
            g = prob / idx.size
            gw, gb = [None] * L, [None] * L
            for k in range(L - 1, -1, -1):
                gw[k] = acts[k].T @ g
                gb[k] = g.sum(0)
                if k > 0:
                    g = (g @ weights[k].T) * (acts[k] > 0)
            t += 1
            grads = gw + gb
            for q, gq, a, b in zip(params, grads, m1, m2):
                if weight_decay and q.ndim == 2:
                    gq = gq + weight_decay * q
                a *= b1
                a += (1 - b1) * gq
                b *= b2
                b += (1 - b2) * gq * gq
                q -= lr * (a / (1 - b1 ** t)) / (np.sqrt(b / (1 - b2 ** t)) + eps)
        loss = _mean_loss(model, X, yi)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"training loss became non-finite at epoch {epoch}")
        model.loss_history.append(loss)
    return model


def integrated_gradients(model: MlpModel, X, baseline=None, steps: int = 256, cls=None) -> np.ndarray:
    """Path attributions ``(x - baseline) * mean_k grad(baseline + a_k (x - baseline))``.

    Uses midpoint nodes ``a_k = (k + 1/2) / steps``. The baseline defaults to
    the training-set feature means; the class defaults to each row's
    predicted class at ``x``.
    """
    single = np.ndim(X) == 1
    X = np.atleast_2d(np.asarray(X, dtype=float))
    base = model.feature_means if baseline is None else np.asarray(baseline, dtype=float)
    if cls is None:
        cls = np.argmax(model.logits(X), axis=1)
    cls = np.broadcast_to(np.asarray(cls), (X.shape[0],))
    diff = X - base
    total = np.zeros_like(X)
    for k in range(steps):
        a = (k + 0.5) / steps
        total += model.input_gradient(base + a * diff, cls)
    out = diff * total / steps
    return out[0] if single else out
