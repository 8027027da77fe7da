"""Gaussian and Gaussian-mixture model-X knockoffs.

For a Gaussian component ``N(mu, Sigma)`` and a diagonal ``D`` with
``2 Sigma - D`` positive semidefinite, the pair ``(X, X_tilde)`` with joint
covariance ``[[Sigma, Sigma - D], [Sigma - D, Sigma]]`` is exchangeable. The
knockoff is drawn from the conditional

    X_tilde | X ~ N(D Sigma^-1 mu + (I - D Sigma^-1) X,  2D - D Sigma^-1 D).

For a mixture, each row first draws its component from the posterior and then
uses that component's conditional.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .gmm import GaussianMixture, posterior

__all__ = [
    "KnockoffGaussianParams",
    "MixtureKnockoffSampler",
    "compute_diag",
    "gaussian_knockoff_params",
    "sample_gaussian_knockoff",
    "sample_mixture_knockoffs",
    "joint_covariance",
]

SHRINK = 1e-6
PSD_SLACK = 1e-8


def compute_diag(cov, shrink: float = SHRINK) -> np.ndarray:
    """Equicorrelated diagonal ``D`` on the correlation scale.

    ``s = min(2 * lambda_min(R), 1) * (1 - shrink)`` and ``D = s * diag(Sigma)``,
    which keeps ``2 Sigma - D = diag(sigma) (2R - sI) diag(sigma)`` PSD.

    Returns the diagonal of ``D`` as a 1-D array.
    """
    S = np.atleast_2d(np.asarray(cov, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise ValueError("covariance must be square")
    if not np.allclose(S, S.T, atol=1e-10, rtol=0):
        raise ValueError("covariance must be symmetric")
    var = np.diag(S)
    if np.any(var <= 0):
        raise ValueError("covariance has a non-positive diagonal entry")
    sd = np.sqrt(var)
    R = S / np.outer(sd, sd)
    lam_min = float(np.linalg.eigvalsh(R)[0])
    if lam_min <= 0:
        raise ValueError(f"correlation matrix is not positive definite (min eigenvalue {lam_min:.3g})")
    s = min(2.0 * lam_min, 1.0) * (1.0 - shrink)
    return s * var


@dataclass(frozen=True)
class KnockoffGaussianParams:
    """Conditional knockoff law for one Gaussian component.

    ``x_tilde = cond_mean_base + cond_coeff @ x + cond_cov_chol @ z``.
    """

    D: np.ndarray
    cond_coeff: np.ndarray
    cond_mean_base: np.ndarray
    cond_cov: np.ndarray
    cond_cov_chol: np.ndarray

    @property
    def dim(self) -> int:
        return self.D.size

    def conditional_mean(self, X) -> np.ndarray:
        """Conditional knockoff mean for each row of ``X`` (or a single vector)."""
        X = np.asarray(X, dtype=float)
        return self.cond_mean_base + X @ self.cond_coeff.T


def _psd_cholesky(M):
    w, V = np.linalg.eigh(M)
    if w[0] < -PSD_SLACK * max(1.0, abs(w[-1])):
        raise ValueError(f"conditional knockoff covariance is not PSD (min eigenvalue {w[0]:.3g})")
    w = np.clip(w, 0.0, None)
    # QR of the symmetric square root gives a triangular factor with L L^T = M
    # even when M is singular.
    root = (V * np.sqrt(w)) @ V.T
    r = np.linalg.qr(root, mode="r")
    L = r.T
    signs = np.sign(np.diag(L))
    signs[signs == 0] = 1.0
    return L * signs


def gaussian_knockoff_params(mean, cov, D) -> KnockoffGaussianParams:
    """Build the conditional knockoff parameters for ``N(mean, cov)``.

    ``D`` may be given as a vector (its diagonal) or a diagonal matrix.
    """
    mu = np.atleast_1d(np.asarray(mean, dtype=float))
    S = np.atleast_2d(np.asarray(cov, dtype=float))
    Dv = np.asarray(D, dtype=float)
    if Dv.ndim == 2:
        Dv = np.diag(Dv)
    d = mu.size
    if S.shape != (d, d) or Dv.shape != (d,):
        raise ValueError("mean, cov and D have inconsistent shapes")
    if np.any(Dv < 0):
        raise ValueError("D must have non-negative entries")
    joint_gap = np.linalg.eigvalsh(2.0 * S - np.diag(Dv))[0]
    if joint_gap < -PSD_SLACK:
        raise ValueError(f"2*Sigma - D is not PSD (min eigenvalue {joint_gap:.3g})")
    try:
        cf = cho_factor(S, lower=True)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(S)
        raise np.linalg.LinAlgError(f"covariance is singular (condition number {cond:.3g})") from exc
    # D Sigma^-1 = (Sigma^-1 D)^T, Sigma symmetric
    DSinv = cho_solve(cf, np.diag(Dv)).T
    coeff = np.eye(d) - DSinv
    base = DSinv @ mu
    cond_cov = 2.0 * np.diag(Dv) - DSinv @ np.diag(Dv)
    cond_cov = 0.5 * (cond_cov + cond_cov.T)
    L = _psd_cholesky(cond_cov)
    return KnockoffGaussianParams(Dv, coeff, base, cond_cov, L)


def joint_covariance(cov, D) -> np.ndarray:
    """``[[Sigma, Sigma - D], [Sigma - D, Sigma]]``."""
    S = np.asarray(cov, dtype=float)
    Dm = np.diag(np.asarray(D, dtype=float)) if np.ndim(D) == 1 else np.asarray(D, dtype=float)
    off = S - Dm
    return np.block([[S, off], [off, S]])


def sample_gaussian_knockoff(params: KnockoffGaussianParams, x, rng) -> np.ndarray:
    """Draw one knockoff per row of ``x`` (a d-vector or (n, d) array)."""
    rng = np.random.default_rng(rng)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.dim:
        raise ValueError(f"expected dimension {params.dim}, got {x.shape[-1]}")
    z = rng.standard_normal(x.shape)
    return params.conditional_mean(x) + z @ params.cond_cov_chol.T


class MixtureKnockoffSampler:
    """Knockoff sampler for a fitted :class:`~knockoffkit.gmm.GaussianMixture`.

    Parameters
    ----------
    model : GaussianMixture
    diags : sequence of arrays, optional
        Per-component ``D_k``; defaults to :func:`compute_diag` of each
        covariance.
    """

    def __init__(self, model: GaussianMixture, diags=None):
        self.model = model
        if diags is None:
            diags = [compute_diag(c) for c in model.covariances]
        if len(diags) != model.num_components:
            raise ValueError("one D per component is required")
        self.params = tuple(
            gaussian_knockoff_params(m, c, D)
            for m, c, D in zip(model.means, model.covariances, diags)
        )

    @property
    def num_components(self) -> int:
        return self.model.num_components

    def sample(self, X, rng, return_components: bool = False):
        return sample_mixture_knockoffs(self, X, rng, return_components=return_components)


def sample_mixture_knockoffs(sampler: MixtureKnockoffSampler, X, rng, return_components: bool = False):
    """Mixture knockoffs: ``k ~ P(K | x)`` then ``x_tilde ~ Q_k(. | x)`` per row.

    The random stream is consumed as: one uniform per row for the component,
    then one standard normal vector per row, so the output depends only on
    ``(X, rng)``.
    """
    rng = np.random.default_rng(rng)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    if d != sampler.model.dim:
        raise ValueError(f"model has dimension {sampler.model.dim}, data has {d}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X must be finite")
    u = rng.random(n)
    z = rng.standard_normal((n, d))
    if sampler.num_components == 1:
        comp = np.zeros(n, dtype=int)
    else:
        post = posterior(sampler.model, X)
        cdf = np.cumsum(post, axis=1)
        comp = np.minimum((u[:, None] >= cdf).sum(axis=1), sampler.num_components - 1)
    Xt = np.empty_like(X)
    for k, p in enumerate(sampler.params):
        idx = comp == k
        if np.any(idx):
            Xt[idx] = p.conditional_mean(X[idx]) + z[idx] @ p.cond_cov_chol.T
    return (Xt, comp) if return_components else Xt
