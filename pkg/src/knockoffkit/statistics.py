"""Importance scores ``Z`` and knockoff feature statistics ``W``.

Scores are computed for all ``2d`` columns of the augmented matrix
``[X, X_tilde]``; the statistic is ``W_j = Z_j - Z_{d+j}``.

Every model-based statistic here is fitted on a canonical column layout:
within each pair ``(X_j, X_tilde_j)`` the two columns are ordered by content,
not by which one is the knockoff. Swapping a pair therefore leaves the fitted
model, the train/eval split and every permutation stream untouched, and only
negates ``W_j``. The flip-sign property then holds exactly, not just in
distribution, for every method and fixed seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .predictors import CapabilityError, fit_lasso, fit_logistic, fit_mlp, integrated_gradients

__all__ = [
    "METHODS",
    "ScoreVector",
    "StatVector",
    "LambdaPath",
    "StatConfig",
    "DEFAULT_GRID",
    "scores_to_stats",
    "augment",
    "swap_columns",
    "canonical_order",
    "permutation_fake",
    "swap_fake",
    "accuracy_drop_scores",
    "lambda_path",
    "integrate_path",
    "saliency_scores",
    "lcd_stats",
    "logistic_coef_stats",
    "compute_statistics",
    "compute_statistic",
]

METHODS = (
    "lcd",
    "logistic",
    "permutation",
    "swap",
    "swap-integral",
    "permutation-integral",
    "gradient",
    "integrated-gradients",
)

DEFAULT_GRID = tuple(np.round(np.arange(0.0, 10.0 + 1e-9, 0.25), 10))


@dataclass
class ScoreVector:
    """Importance scores for the ``d`` originals followed by the ``d`` knockoffs."""

    z: np.ndarray
    method: str = ""

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float).reshape(-1)
        if self.z.size % 2:
            raise ValueError("score vector must have even length 2d")
        if not np.all(np.isfinite(self.z)):
            raise ValueError("scores must be finite")

    @property
    def d(self) -> int:
        return self.z.size // 2


@dataclass
class StatVector:
    w: np.ndarray
    method: str = ""
    seed: Optional[int] = None
    z: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float).reshape(-1)
        if not np.all(np.isfinite(self.w)):
            raise ValueError("statistics must be finite")


@dataclass
class LambdaPath:
    grid: np.ndarray
    values: np.ndarray
    method: str = ""

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.grid.ndim != 1 or self.grid.size == 0 or self.grid[0] != 0.0:
            raise ValueError("grid must start at 0")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if self.values.shape[0] != self.grid.size:
            raise ValueError("one row of values per grid point is required")


def scores_to_stats(z, method: str = "", seed=None) -> StatVector:
    """``W_j = Z_j - Z_tilde_j``."""
    sv = z if isinstance(z, ScoreVector) else ScoreVector(z, method)
    d = sv.d
    return StatVector(sv.z[:d] - sv.z[d:], method or sv.method, seed, sv.z.copy())


def augment(X, Xk) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xk = np.atleast_2d(np.asarray(Xk, dtype=float))
    if X.shape != Xk.shape:
        raise ValueError("X and its knockoff must have the same shape")
    return np.hstack([X, Xk])


def swap_columns(X, Xk, subset):
    """``[X, X_tilde]_swap(S)`` returned as the pair of swapped halves."""
    X2, Xk2 = np.array(X, dtype=float, copy=True), np.array(Xk, dtype=float, copy=True)
    S = np.asarray(list(subset), dtype=int)
    X2[:, S], Xk2[:, S] = Xk[:, S], X[:, S]
    return X2, Xk2


def canonical_order(X, Xk):
    """Content-based ordering of each column pair.

    Returns ``(flip, tied)``: ``flip[j]`` is True when the knockoff column
    sorts first (compared at the first row where the pair differs);
    ``tied[j]`` marks pairs that are identical.
    """
    X = np.asarray(X, dtype=float)
    Xk = np.asarray(Xk, dtype=float)
    diff = X != Xk
    tied = ~diff.any(axis=0)
    first = np.argmax(diff, axis=0)
    cols = np.arange(X.shape[1])
    flip = (X[first, cols] > Xk[first, cols]) & ~tied
    return flip, tied


def _canonical(X, Xk):
    flip, tied = canonical_order(X, Xk)
    A, B = swap_columns(X, Xk, np.flatnonzero(flip))
    return A, B, flip, tied


def _decanonical(zc, flip, tied, method, seed):
    d = flip.size
    z = zc.copy()
    idx = np.flatnonzero(flip)
    z[idx], z[d + idx] = zc[d + idx], zc[idx]
    sv = scores_to_stats(z, method, seed)
    # identical pairs are unchanged by a swap, so their statistic must be 0
    sv.w[tied] = 0.0
    return sv


# ---------------------------------------------------------------------------
# fake columns

def permutation_fake(column, rng) -> np.ndarray:
    """Seeded row shuffle of one column."""
    rng = np.random.default_rng(rng)
    column = np.asarray(column)
    return column[rng.permutation(column.shape[0])]


def swap_fake(Xaug, j: int) -> np.ndarray:
    """Exchange column ``j`` with its partner (``j +/- d``)."""
    Xaug = np.array(Xaug, dtype=float, copy=True)
    d = Xaug.shape[1] // 2
    partner = j + d if j < d else j - d
    Xaug[:, [j, partner]] = Xaug[:, [partner, j]]
    return Xaug


def _fake_targets(Xaug, method, seed):
    """Replacement column for every augmented column, shape like ``Xaug``."""
    d = Xaug.shape[1] // 2
    if method == "swap":
        return np.hstack([Xaug[:, d:], Xaug[:, :d]])
    if method == "permutation":
        out = np.empty_like(Xaug)
        for c in range(Xaug.shape[1]):
            out[:, c] = permutation_fake(Xaug[:, c], np.random.default_rng([seed, c]))
        return out
    raise ValueError(f"unknown fake method {method!r}")


# ---------------------------------------------------------------------------
# accuracy drops

def _is_regression(predictor) -> bool:
    return getattr(predictor, "family", None) == "gaussian"


def _block_scores(predictor, stacked, Y, n_blocks):
    """Accuracy (or negative MSE) of each of ``n_blocks`` stacked copies."""
    Y = np.asarray(Y)
    n = Y.shape[0]
    pred = np.asarray(predictor.predict(stacked)).reshape(n_blocks, n)
    if _is_regression(predictor):
        return -np.mean((pred - Y.astype(float)) ** 2, axis=1)
    return np.mean(pred == Y, axis=1)


def _perturbed_scores(predictor, Xaug, Y, targets, lam, chunk_rows=60000):
    """Score after moving each column ``c`` to ``X_c + lam (T_c - X_c)``, one at a time."""
    if hasattr(predictor, "first_layer") and not _is_regression(predictor):
        return _perturbed_scores_mlp(predictor, Xaug, Y, targets, lam, chunk_rows)
    n, p = Xaug.shape
    per_chunk = max(1, chunk_rows // max(n, 1))
    out = np.empty(p)
    for start in range(0, p, per_chunk):
        cols = range(start, min(p, start + per_chunk))
        stacked = np.repeat(Xaug[None], len(cols), axis=0)
        for b, c in enumerate(cols):
            stacked[b, :, c] = Xaug[:, c] + lam * (targets[:, c] - Xaug[:, c])
        out[start:start + len(cols)] = _block_scores(predictor, stacked.reshape(-1, p), Y, len(cols))
    return out


def _perturbed_scores_mlp(model, Xaug, Y, targets, lam, chunk_rows, H0=None):
    # moving one input column shifts the first-layer pre-activation by a rank-one term
    n, p = Xaug.shape
    if H0 is None:
        H0 = model.first_layer(Xaug)
    W1 = model.weights[0]
    step = lam * (targets - Xaug) / model.x_scale[:p]
    yi = np.searchsorted(model.classes, np.asarray(Y))
    known = np.isin(np.asarray(Y), model.classes)
    per_chunk = max(1, chunk_rows // max(n, 1))
    out = np.empty(p)
    for start in range(0, p, per_chunk):
        cols = np.arange(start, min(p, start + per_chunk))
        H = H0[None] + step[:, cols].T[:, :, None] * W1[cols][:, None, :]
        logits = model.logits_from_first_layer(H.reshape(-1, H0.shape[1]), np.float32)
        pred = np.argmax(logits, axis=1).reshape(cols.size, n)
        out[cols] = np.mean((pred == yi) & known, axis=1)
    return out


def _score(predictor, Xaug, Y) -> float:
    if hasattr(predictor, "first_layer") and not _is_regression(predictor):
        # same arithmetic as the perturbed evaluations, so an unchanged column drops by exactly 0
        return float(_perturbed_scores_mlp(predictor, Xaug[:, :1], Y, Xaug[:, :1], 0.0, 1,
                                           H0=predictor.first_layer(Xaug))[0])
    return float(_block_scores(predictor, Xaug, Y, 1)[0])


def accuracy_drop_scores(predictor, X, Xk, Y, fake_builder: Callable, method: str = "") -> ScoreVector:
    """``Z_c`` = score on ``[X, X_tilde]`` minus score with column ``c`` faked.

    Parameters
    ----------
    predictor : fitted model with ``predict``
        Trained on the augmented training split.
    X, Xk, Y : evaluation data
    fake_builder : callable ``(Xaug, c) -> column``
        Replacement for column ``c``.
    """
    Xaug = augment(X, Xk)
    base = _score(predictor, Xaug, Y)
    p = Xaug.shape[1]
    targets = np.empty_like(Xaug)
    for c in range(p):
        col = np.asarray(fake_builder(Xaug, c), dtype=float)
        if col.shape != (Xaug.shape[0],):
            raise ValueError(f"fake column {c} has shape {col.shape}, expected {(Xaug.shape[0],)}")
        targets[:, c] = col
    z = base - _perturbed_scores(predictor, Xaug, Y, targets, 1.0)
    return ScoreVector(z, method)


def lambda_path(predictor, X, Xk, Y, method: str = "swap", grid: Sequence[float] = DEFAULT_GRID,
                seed: int = 0) -> LambdaPath:
    """Statistics ``W(lam)`` along ``X_c + lam (T_c - X_c)`` for each grid point.

    ``T_c`` is the partner column for ``method="swap"`` and a seeded shuffle
    of column ``c`` (stream ``[seed, c]``) for ``method="permutation"``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] != 0.0:
        raise ValueError("grid must start at 0")
    Xaug = augment(X, Xk)
    d = Xaug.shape[1] // 2
    targets = _fake_targets(Xaug, method, seed)
    base = _score(predictor, Xaug, Y)
    values = np.zeros((grid.size, d))
    for t, lam in enumerate(grid):
        if lam == 0.0:
            continue  # data unchanged, every drop is exactly zero
        z = base - _perturbed_scores(predictor, Xaug, Y, targets, lam)
        values[t] = z[:d] - z[d:]
    return LambdaPath(grid, values, method)


def integrate_path(path: LambdaPath) -> StatVector:
    """Trapezoidal area under each feature's path."""
    if path.grid.size < 2:
        raise ValueError("need at least two grid points")
    w = trapezoid(path.values, path.grid, axis=0)
    name = f"{path.method}-integral" if path.method else "integral"
    return StatVector(w, name)


def saliency_scores(model, X, Xk, variant: str = "gradient", steps: int = 64) -> ScoreVector:
    """Mean absolute attribution of each augmented column for the predicted class."""
    if not getattr(model, "has_gradients", False):
        raise CapabilityError(f"{type(model).__name__} does not provide input gradients")
    Xaug = augment(X, Xk)
    if variant == "gradient":
        att = model.input_gradient(Xaug, None)
    elif variant in ("integrated", "integrated-gradients"):
        att = integrated_gradients(model, Xaug, steps=steps)
    else:
        raise ValueError(f"unknown saliency variant {variant!r}")
    return ScoreVector(np.mean(np.abs(np.atleast_2d(att)), axis=0), variant)


# ---------------------------------------------------------------------------
# full statistics from raw data

@dataclass
class StatConfig:
    """Settings shared by the statistic methods.

    ``predictor`` selects the model trained for accuracy-drop and saliency
    methods (``"mlp"`` or ``"logistic"``).
    """

    predictor: str = "mlp"
    layers: tuple = (64, 64, 64)
    epochs: int = 100
    lr: float = 1e-3
    batch_size: int = 64
    logistic_l2: float = 1e-4
    family: str = "binomial"
    cv: int = 5
    lasso_lambda: Optional[float] = None
    lasso_l2: float = 0.0
    train_frac: float = 0.75
    grid: tuple = DEFAULT_GRID
    ig_steps: int = 64
    seed: int = 0


def lcd_stats(X, Xk, Y, family: str = "gaussian", cv: int = 5, lam=None, l2: float = 0.0,
              seed: int = 0) -> StatVector:
    """Lasso coefficient difference ``|beta_j| - |beta_{d+j}|``."""
    A, B, flip, tied = _canonical(X, Xk)
    fit = fit_lasso(augment(A, B), Y, family=family, lam=lam, cv=cv, l2=l2, seed=seed)
    return _decanonical(np.abs(fit.coef), flip, tied, "lcd", seed)


def logistic_coef_stats(X, Xk, Y, l2: float = 1e-4) -> StatVector:
    """Difference of absolute ridge-logistic coefficients."""
    A, B, flip, tied = _canonical(X, Xk)
    fit = fit_logistic(augment(A, B), Y, l2=l2)
    return _decanonical(np.abs(fit.coef), flip, tied, "logistic", None)


def _split(n, train_frac, seed):
    perm = np.random.default_rng([seed, 0xE7A1]).permutation(n)
    n_train = int(round(train_frac * n))
    n_train = min(max(n_train, 1), n - 1)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def _train_predictor(Xaug, Y, cfg: StatConfig):
    if cfg.predictor == "mlp":
        return fit_mlp(Xaug, Y, layers=cfg.layers, epochs=cfg.epochs, lr=cfg.lr,
                       seed=cfg.seed, batch_size=cfg.batch_size)
    if cfg.predictor == "logistic":
        return fit_logistic(Xaug, Y, l2=cfg.logistic_l2)
    raise ValueError(f"unknown predictor {cfg.predictor!r}")


def compute_statistics(X, Xk, Y, methods: Sequence[str], config: StatConfig | None = None,
                       return_paths: bool = False):
    """Compute several statistics, sharing one trained predictor.

    Returns ``{method: StatVector}`` (and ``{method: LambdaPath}`` for the
    integral methods when ``return_paths``; paths are in canonical layout
    and mapped back to feature order).
    """
    cfg = config or StatConfig()
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xk = np.atleast_2d(np.asarray(Xk, dtype=float))
    Y = np.asarray(Y).reshape(-1)
    A, B, flip, tied = _canonical(X, Xk)
    d = X.shape[1]
    sign = np.where(flip, -1.0, 1.0)
    out, paths = {}, {}
    for m in methods:
        if m == "lcd":
            fit = fit_lasso(augment(A, B), Y, family=cfg.family, lam=cfg.lasso_lambda, cv=cfg.cv,
                            l2=cfg.lasso_l2, seed=cfg.seed)
            out[m] = _decanonical(np.abs(fit.coef), flip, tied, m, cfg.seed)
        elif m == "logistic":
            fit = fit_logistic(augment(A, B), Y, l2=cfg.logistic_l2)
            out[m] = _decanonical(np.abs(fit.coef), flip, tied, m, cfg.seed)
    model_methods = [m for m in methods if m not in ("lcd", "logistic")]
    if not model_methods:
        return (out, paths) if return_paths else out
    tr, ev = _split(X.shape[0], cfg.train_frac, cfg.seed)
    Aug = augment(A, B)
    model = _train_predictor(Aug[tr], Y[tr], cfg)
    Ae, Be, Ye = A[ev], B[ev], Y[ev]
    for m in model_methods:
        if m in ("swap", "permutation"):
            targets = _fake_targets(augment(Ae, Be), m, cfg.seed)
            zc = accuracy_drop_scores(model, Ae, Be, Ye, lambda _, c: targets[:, c], m).z
            out[m] = _decanonical(zc, flip, tied, m, cfg.seed)
        elif m in ("swap-integral", "permutation-integral"):
            base = m.split("-")[0]
            path = lambda_path(model, Ae, Be, Ye, base, cfg.grid, cfg.seed)
            sv = integrate_path(path)
            w = sv.w * sign
            w[tied] = 0.0
            out[m] = StatVector(w, m, cfg.seed)
            if return_paths:
                vals = path.values * sign
                vals[:, tied] = 0.0
                paths[m] = LambdaPath(path.grid, vals, base)
        elif m in ("gradient", "integrated-gradients"):
            zc = saliency_scores(model, Ae, Be, m, steps=cfg.ig_steps).z
            out[m] = _decanonical(zc, flip, tied, m, cfg.seed)
    return (out, paths) if return_paths else out


def compute_statistic(method: str, X, Xk, Y, config: StatConfig | None = None) -> StatVector:
    return compute_statistics(X, Xk, Y, [method], config)[method]
