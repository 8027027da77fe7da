"""Gaussian mixture models: EM fitting, AIC order selection, posteriors.

The fitted :class:`GaussianMixture` is the feature model from which mixture
knockoffs are drawn (see :mod:`knockoffkit.gaussian_knockoffs`).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

__all__ = [
    "GaussianMixture",
    "EmConfig",
    "FitResult",
    "fit_em",
    "select_k_aic",
    "aic",
    "num_parameters",
    "posterior",
    "log_density",
    "component_log_densities",
    "sample",
]

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of full-covariance Gaussians.

    Attributes
    ----------
    weights : (l,) ndarray
        Mixing proportions, summing to one.
    means : (l, d) ndarray
    covariances : (l, d, d) ndarray
        Symmetric positive definite component covariances.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cov = np.asarray(self.covariances, dtype=float)
        if cov.ndim == 2:
            cov = cov[None]
        if mu.shape[0] != w.size or cov.shape[0] != w.size:
            raise ValueError("weights, means and covariances disagree on the number of components")
        if cov.shape[1:] != (mu.shape[1], mu.shape[1]):
            raise ValueError("covariances must be (l, d, d)")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError("weights must be a probability vector")
        if not np.allclose(cov, np.swapaxes(cov, 1, 2), atol=1e-10, rtol=0):
            raise ValueError("covariances must be symmetric")
        for arr in (w, mu, cov):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)
        chol = np.empty_like(cov)
        for k in range(w.size):
            try:
                chol[k] = np.linalg.cholesky(cov[k])
            except np.linalg.LinAlgError as exc:
                raise ValueError(f"covariance {k} is not positive definite") from exc
        chol.setflags(write=False)
        object.__setattr__(self, "_chol", chol)

    @property
    def num_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def cholesky_factors(self) -> np.ndarray:
        """Lower Cholesky factors of the component covariances, (l, d, d)."""
        return self._chol

    def permuted(self, order) -> "GaussianMixture":
        """Return the same mixture with components relabeled by ``order``."""
        order = np.asarray(order)
        return GaussianMixture(self.weights[order], self.means[order], self.covariances[order])


@dataclass
class EmConfig:
    """EM settings.

    ``reg`` is the ridge added to every covariance diagonal. When ``None`` it
    defaults to ``1e-6`` times the mean diagonal of the sample covariance.
    """

    max_iters: int = 300
    tol: float = 1e-6
    reg: Optional[float] = None
    n_restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1 or self.n_restarts < 1:
            raise ValueError("max_iters and n_restarts must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.reg is not None and not self.reg > 0:
            raise ValueError("reg must be positive")


@dataclass
class FitResult:
    model: GaussianMixture
    log_likelihood: float
    history: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    reseeds: int = 0


def _as_data(data) -> np.ndarray:
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.size == 0:
        raise ValueError("data must be a non-empty (n, d) array")
    if not np.all(np.isfinite(X)):
        raise ValueError("data contains non-finite entries")
    return X


def _component_logpdf(X, means, chols):
    # (n, l) matrix of log N(x_i; mu_k, Sigma_k)
    n, d = X.shape
    out = np.empty((n, means.shape[0]))
    for k in range(means.shape[0]):
        L = chols[k]
        z = solve_triangular(L, (X - means[k]).T, lower=True, check_finite=False)
        logdet = 2.0 * np.log(np.diag(L)).sum()
        out[:, k] = -0.5 * (d * LOG_2PI + logdet + np.einsum("ij,ij->j", z, z))
    return out


def component_log_densities(model: GaussianMixture, X) -> np.ndarray:
    """``log N(x_i; mu_k, Sigma_k)`` for every row and component, shape (n, l)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.dim:
        raise ValueError(f"expected {model.dim} columns, got {X.shape[1]}")
    return _component_logpdf(X, model.means, model.cholesky_factors)


def _log_joint(model, X):
    with np.errstate(divide="ignore"):
        logw = np.log(model.weights)
    return component_log_densities(model, X) + logw


def log_density(model: GaussianMixture, x) -> np.ndarray | float:
    """Mixture log-density at ``x`` (a d-vector or an (n, d) array)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    single = x.ndim == 1
    out = logsumexp(_log_joint(model, np.atleast_2d(x)), axis=1)
    return float(out[0]) if single else out


def posterior(model: GaussianMixture, x) -> np.ndarray:
    """Posterior component probabilities ``P(K = k | X = x)``.

    Accepts a single d-vector (returns shape (l,)) or an (n, d) array
    (returns (n, l)). Computed in log space. A row whose component
    densities all underflow is hard-assigned to the nearest mean.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    single = x.ndim == 1
    X = np.atleast_2d(x)
    lj = _log_joint(model, X)
    norm = logsumexp(lj, axis=1, keepdims=True)
    bad = ~np.isfinite(norm[:, 0])
    with np.errstate(invalid="ignore"):
        post = np.exp(lj - norm)
    if np.any(bad):
        d2 = ((X[bad, None, :] - model.means[None]) ** 2).sum(-1)
        post[bad] = 0.0
        post[np.flatnonzero(bad), np.argmin(d2, axis=1)] = 1.0
    # renormalise away the last ulp so rows sum to one
    post /= post.sum(axis=1, keepdims=True)
    return post[0] if single else post


def sample(model: GaussianMixture, n: int, rng: np.random.Generator, return_labels: bool = False):
    """Draw ``n`` rows: categorical component then ``mu_k + L_k z``."""
    rng = np.random.default_rng(rng)
    d = model.dim
    if n == 0:
        X = np.empty((0, d))
        return (X, np.empty(0, dtype=int)) if return_labels else X
    labels = rng.choice(model.num_components, size=n, p=model.weights)
    z = rng.standard_normal((n, d))
    X = np.empty((n, d))
    for k in range(model.num_components):
        idx = labels == k
        if np.any(idx):
            X[idx] = model.means[k] + z[idx] @ model.cholesky_factors[k].T
    return (X, labels) if return_labels else X


def num_parameters(l: int, d: int) -> int:
    """Free parameters of an l-component full-covariance mixture in d dims."""
    return (l - 1) + l * d + l * d * (d + 1) // 2


def aic(model: GaussianMixture, data) -> float:
    X = _as_data(data)
    ll = float(np.sum(log_density(model, X)))
    return 2.0 * num_parameters(model.num_components, model.dim) - 2.0 * ll


def _kmeanspp(X, k, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(1))
    return np.array(centers)


def _safe_cholesky(S, reg):
    """Cholesky of ``S``, escalating diagonal jitter on failure. Returns (L, S_used)."""
    try:
        return np.linalg.cholesky(S), S
    except np.linalg.LinAlgError:
        jitter = reg
        for _ in range(12):
            jitter *= 10.0
            S_j = S + jitter * np.eye(S.shape[0])
            try:
                return np.linalg.cholesky(S_j), S_j
            except np.linalg.LinAlgError:
                continue
        raise


def _em_single(X, k, cfg, reg, pooled, rng) -> FitResult:
    n, d = X.shape
    eye = np.eye(d)
    means = _kmeanspp(X, k, rng)
    covs = np.repeat(pooled[None], k, axis=0)
    weights = np.full(k, 1.0 / k)
    chols = np.array([_safe_cholesky(c, reg)[0] for c in covs])
    # Collapse threshold: a component owning less than this mass is re-seeded.
    min_mass = 1e-8 * n
    history = []
    reseeds = 0
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        lj = _component_logpdf(X, means, chols) + np.log(weights)
        norm = logsumexp(lj, axis=1)
        ll = float(norm.sum())
        history.append(ll)
        if len(history) > 1:
            prev = history[-2]
            if abs(ll - prev) <= cfg.tol * max(abs(prev), 1.0):
                converged = True
                break
        resp = np.exp(lj - norm[:, None])
        nk = resp.sum(0)
        for j in np.flatnonzero(nk < min_mass):
            # re-seed a dead component on a random data point
            reseeds += 1
            resp[:, j] = 0.0
            resp[rng.integers(n), j] = 1.0
            nk[j] = 1.0
        weights = nk / nk.sum()
        means = (resp.T @ X) / nk[:, None]
        for j in range(k):
            Xc = X - means[j]
            S = (resp[:, j, None] * Xc).T @ Xc / nk[j]
            S = 0.5 * (S + S.T) + reg * eye
            chols[j], covs[j] = _safe_cholesky(S, reg)
        if reseeds:
            # history across a re-seed is not comparable
            history = []
    model = GaussianMixture(weights, means, covs)
    final_ll = float(np.sum(log_density(model, X)))
    return FitResult(model, final_ll, history, it, converged, reseeds)


def fit_em(data, k: int, config: EmConfig | None = None, rng=None, return_result: bool = False):
    """Fit a ``k``-component full-covariance mixture by EM.

    Runs ``config.n_restarts`` independent restarts (k-means++ seeded means,
    pooled-covariance initial covariances) and keeps the one with the
    highest log-likelihood. Restart ``r`` draws from the stream
    ``SeedSequence([seed, r])`` unless an explicit ``rng`` is given.

    Parameters
    ----------
    data : (n, d) array_like
    k : int
    config : EmConfig, optional
    rng : numpy Generator or int, optional
        Overrides ``config.seed`` as the source of restart streams.
    return_result : bool
        Return a :class:`FitResult` (with the log-likelihood trace) instead
        of the bare model.
    """
    cfg = config or EmConfig()
    X = _as_data(data)
    n, d = X.shape
    if k < 1:
        raise ValueError("k must be positive")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of samples n={n}")
    pooled = np.atleast_2d(np.cov(X, rowvar=False, bias=True))
    scale = float(np.mean(np.diag(pooled)))
    reg = cfg.reg if cfg.reg is not None else 1e-6 * (scale if scale > 0 else 1.0)
    pooled = pooled + reg * np.eye(d)
    if rng is None:
        streams = [np.random.default_rng([cfg.seed, r]) for r in range(cfg.n_restarts)]
    else:
        parent = np.random.default_rng(rng)
        streams = parent.spawn(cfg.n_restarts)
    best = None
    for stream in streams:
        res = _em_single(X, k, cfg, reg, pooled, stream)
        if best is None or res.log_likelihood > best.log_likelihood:
            best = res
        if k == 1:
            break  # deterministic: every restart is identical
    return best if return_result else best.model


def select_k_aic(data, k_range: Iterable[int], config: EmConfig | None = None, rng=None,
                 return_table: bool = False):
    """Fit every ``k`` in ``k_range`` and keep the AIC minimiser.

    Ties go to the smaller ``k``. Returns ``(model, chosen_k)`` or, with
    ``return_table``, ``(model, chosen_k, {k: aic})``.
    """
    X = _as_data(data)
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("k_range is empty")
    if ks[-1] > X.shape[0]:
        raise ValueError("every k must be at most n")
    parent = None if rng is None else np.random.default_rng(rng)
    table = {}
    best = None
    for k in ks:
        sub = None if parent is None else parent.spawn(1)[0]
        model = fit_em(X, k, config, rng=sub)
        score = aic(model, X)
        table[k] = score
        if best is None or score < best[2]:
            best = (model, k, score)
    if return_table:
        return best[0], best[1], table
    return best[0], best[1]
