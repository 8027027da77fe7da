"""Shared oracles for the test suite."""
import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit
from scipy.stats import rankdata


def auc(score, label):
    """Mann-Whitney AUC of ``score`` for positives ``label == 1``."""
    r = rankdata(score)
    pos = label == 1
    n1, n0 = pos.sum(), (~pos).sum()
    return (r[pos].sum() - n1 * (n1 + 1) / 2) / (n1 * n0)


def quad_features(Z):
    Z = (Z - Z.mean(0)) / Z.std(0)
    iu = np.triu_indices(Z.shape[1])
    return np.hstack([Z, (Z[:, :, None] * Z[:, None, :])[:, iu[0], iu[1]]])


def swap_discriminator_auc(X, Xk, rng, subset=None):
    """Held-out AUC of a quadratic logistic classifier separating
    ``[X, Xk]`` from ``[X, Xk]_swap(S)``.

    Rows are split in two disjoint halves; one half is swapped, so the two
    classes are independent samples. Values near 0.5 mean the classifier
    cannot tell them apart.
    """
    n, d = X.shape
    if subset is None:
        subset = np.flatnonzero(rng.random(d) < 0.5)
        if subset.size == 0:
            subset = np.array([0])
    Z = np.hstack([X, Xk])
    half = rng.permutation(n)
    a, b = half[: n // 2], half[n // 2:]
    Zs = Z[b].copy()
    Zs[:, subset], Zs[:, d + subset] = Z[b][:, d + subset], Z[b][:, subset]
    F = quad_features(np.vstack([Z[a], Zs]))
    F = np.hstack([np.ones((len(F), 1)), F])
    y = np.r_[np.zeros(len(a)), np.ones(len(b))]
    perm = rng.permutation(len(y))
    F, y = F[perm], y[perm]
    tr, te = slice(0, len(y) // 2), slice(len(y) // 2, None)

    def loss(w):
        m = F[tr] @ w
        s = 2 * y[tr] - 1
        g = -F[tr].T @ ((s * expit(-s * m))) / len(m) + 1e-4 * w
        return -log_expit(s * m).mean() + 0.5e-4 * w @ w, g

    w = minimize(loss, np.zeros(F.shape[1]), jac=True, method="L-BFGS-B").x
    return auc(F[te] @ w, y[te])
