"""Synthetic data generators and a seeded experiment runner.

Each repetition derives its generator from ``(master seed, repetition)``, so
results do not depend on the order in which repetitions are run.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

from . import gmm
from .filter import evaluate, select
from .knockoff_core import MixtureKnockoffSampler, sample_mixture_knockoffs
from .statistics import StatConfig, compute_statistics

__all__ = [
    "SyntheticSpec",
    "BreakSpec",
    "TMixtureSpec",
    "ExperimentConfig",
    "ExperimentResult",
    "random_covariance",
    "random_mixture",
    "polynomial_scores",
    "generate_synthetic",
    "break_mixture",
    "generate_break_experiment",
    "generate_t_mixture",
    "generate_t_experiment",
    "run_experiment",
    "PRESETS",
    "preset",
]


# ---------------------------------------------------------------------------
# data generators

@dataclass
class SyntheticSpec:
    """Mixture features with labels from noisy argmax of random cubic polynomials."""

    n: int = 2000
    d: int = 30
    l: int = 5
    C: int = 2
    nonnull_count: int = 10
    degree: int = 3
    noise: float = 0.1
    box: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or self.l < 1:
            raise ValueError("n, d and l must be positive")
        if self.C < 2:
            raise ValueError("C must be at least 2")
        if not 0 <= self.nonnull_count <= self.d:
            raise ValueError("nonnull_count must lie in [0, d]")
        if self.degree < 1:
            raise ValueError("degree must be at least 1")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")


def random_covariance(d: int, rng) -> np.ndarray:
    """``A A^T / d + 0.1 I`` with standard normal ``A``."""
    A = rng.standard_normal((d, d))
    S = A @ A.T / d + 0.1 * np.eye(d)
    return 0.5 * (S + S.T)


def random_mixture(d: int, l: int, rng, box: float = 3.0, concentration: float = 5.0) -> gmm.GaussianMixture:
    """Means uniform in ``[-box, box]^d``, random covariances, Dirichlet weights."""
    weights = rng.dirichlet(np.full(l, concentration)) if l > 1 else np.ones(1)
    means = rng.uniform(-box, box, (l, d))
    covs = np.stack([random_covariance(d, rng) for _ in range(l)])
    return gmm.GaussianMixture(weights, means, covs)


def _monomials(k: int, degree: int):
    out = [()]
    for deg in range(1, degree + 1):
        out.extend(itertools.combinations_with_replacement(range(k), deg))
    return out


def polynomial_scores(Z, coefs, degree: int) -> np.ndarray:
    """Evaluate ``C`` polynomials sharing a monomial basis; ``coefs`` is (n_monomials, C)."""
    Z = np.atleast_2d(Z)
    basis = np.column_stack([np.prod(Z[:, list(m)], axis=1) if m else np.ones(Z.shape[0])
                             for m in _monomials(Z.shape[1], degree)])
    return basis @ coefs


def generate_synthetic(spec: SyntheticSpec, rng, model: gmm.GaussianMixture | None = None,
                       score_fn: Callable | None = None, return_model: bool = False):
    """Draw ``(X, Y, nonnulls)``.

    The nonnull features are a random subset; polynomials act on them after
    standardisation by the mixture's pooled moments. ``score_fn(X) -> (n, C)``
    replaces the random polynomials (noise is still added). Labels are
    ``0..C-1``.
    """
    rng = np.random.default_rng(rng)
    if model is None:
        model = random_mixture(spec.d, spec.l, rng, spec.box)
    elif model.dim != spec.d:
        raise ValueError("model dimension does not match spec.d")
    X = gmm.sample(model, spec.n, rng)
    nonnulls = np.sort(rng.choice(spec.d, spec.nonnull_count, replace=False))
    if score_fn is not None:
        F = np.asarray(score_fn(X), dtype=float)
        if F.shape != (spec.n, spec.C):
            raise ValueError(f"score_fn must return shape {(spec.n, spec.C)}")
    else:
        mu, sd = _pooled_moments(model)
        Z = (X[:, nonnulls] - mu[nonnulls]) / sd[nonnulls]
        coefs = rng.standard_normal((len(_monomials(len(nonnulls), spec.degree)), spec.C))
        F = polynomial_scores(Z, coefs, spec.degree)
    F = F + spec.noise * rng.standard_normal(F.shape)
    Y = np.argmax(F, axis=1)
    return (X, Y, nonnulls, model) if return_model else (X, Y, nonnulls)


def _pooled_moments(model):
    w = model.weights
    mu = w @ model.means
    var = w @ (np.diagonal(model.covariances, axis1=1, axis2=2) + model.means ** 2) - mu ** 2
    return mu, np.sqrt(np.maximum(var, 1e-300))


@dataclass
class BreakSpec:
    """Three-component design where a single Gaussian gives invalid knockoffs.

    Features ``0..9`` carry the logistic signal ``beta_j = signal * s_j`` with
    random signs ``s_j``. The components sit at offsets ``(0, +sep, -sep)``
    along ``s`` on those features, so the middle component lies where the
    sigmoid is steep and the outer two where it is flat. Within components,
    feature ``10+j`` has correlation ``rho`` with feature ``j`` in the middle
    component and ``-rho/2`` in the outer ones: strongly correlated inside
    each component, exactly uncorrelated after pooling. Features ``20..29``
    are standard normal in every component.
    """

    n: int = 2000
    rho: float = 0.7
    sep: float = 2.0
    signal: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.n < 1:
            raise ValueError("n must be positive")

    l: int = field(default=3, init=False)
    d: int = field(default=30, init=False)


def break_mixture(rng, spec: BreakSpec | None = None, signs=None) -> gmm.GaussianMixture:
    """The three-component feature model; ``signs`` orients the offsets (random if omitted)."""
    spec = spec or BreakSpec()
    signs = rng.choice([-1.0, 1.0], 10) if signs is None else np.asarray(signs, dtype=float)
    means = np.zeros((3, 30))
    means[1, :10] = spec.sep * signs
    means[2, :10] = -spec.sep * signs
    covs = np.tile(np.eye(30), (3, 1, 1))
    idx = np.arange(10)
    for k, r in enumerate((spec.rho, -spec.rho / 2, -spec.rho / 2)):
        covs[k, idx, idx + 10] = covs[k, idx + 10, idx] = r
    return gmm.GaussianMixture(np.full(3, 1.0 / 3), means, covs)


def generate_break_experiment(rng, spec: BreakSpec | None = None, return_model: bool = False):
    """``(X, Y, nonnulls)`` with ``Y ~ Bernoulli(sigmoid(beta . x))``, beta supported on ``0..9``."""
    spec = spec or BreakSpec()
    rng = np.random.default_rng(rng)
    signs = rng.choice([-1.0, 1.0], 10)
    model = break_mixture(rng, spec, signs)
    X = gmm.sample(model, spec.n, rng)
    beta = np.zeros(30)
    beta[:10] = spec.signal * signs
    Y = (rng.random(spec.n) < expit(X @ beta)).astype(int)
    nonnulls = np.arange(10)
    return (X, Y, nonnulls, model) if return_model else (X, Y, nonnulls)


def generate_t_mixture(dof: float, l: int, n: int, d: int, rng, model: gmm.GaussianMixture | None = None,
                       box: float = 3.0, return_labels: bool = False):
    """Mixture of multivariate t components (Gaussian draw divided by ``sqrt(chi2 / dof)``)."""
    if dof <= 0:
        raise ValueError("dof must be positive")
    if dof <= 2:
        warnings.warn("dof <= 2: component variance is infinite", RuntimeWarning, stacklevel=2)
    rng = np.random.default_rng(rng)
    if model is None:
        model = random_mixture(d, l, rng, box)
    labels = rng.choice(model.num_components, size=n, p=model.weights)
    Z = rng.standard_normal((n, model.dim))
    scale = np.sqrt(rng.chisquare(dof, n) / dof)
    X = np.empty((n, model.dim))
    for k in range(model.num_components):
        idx = labels == k
        X[idx] = model.means[k] + (Z[idx] @ model.cholesky_factors[k].T) / scale[idx, None]
    return (X, labels) if return_labels else X


@dataclass
class TMixtureSpec:
    """t-mixture features with a logistic label on the first ``nonnull_count`` features."""

    n: int = 2000
    d: int = 20
    l: int = 3
    dof: float = 10.0
    nonnull_count: int = 5
    signal: float = 1.0
    box: float = 3.0
    seed: int = 0


def generate_t_experiment(spec: TMixtureSpec, rng):
    rng = np.random.default_rng(rng)
    model = random_mixture(spec.d, spec.l, rng, spec.box)
    X = generate_t_mixture(spec.dof, spec.l, spec.n, spec.d, rng, model=model)
    nonnulls = np.arange(spec.nonnull_count)
    beta = np.zeros(spec.d)
    beta[nonnulls] = spec.signal * rng.choice([-1.0, 1.0], spec.nonnull_count)
    Xs = (X - np.median(X, 0)) / np.maximum(_robust_scale(X), 1e-12)
    Y = (rng.random(spec.n) < expit(Xs @ beta)).astype(int)
    return X, Y, nonnulls


def _robust_scale(X):
    q75, q25 = np.percentile(X, [75, 25], axis=0)
    return (q75 - q25) / 1.349


# ---------------------------------------------------------------------------
# experiment runner

MODELS = ("oracle", "gmm", "gmm-aic", "gaussian")
DATASETS = ("synthetic", "break", "t-mixture")


@dataclass
class ExperimentConfig:
    """Everything needed to rerun an experiment.

    ``models`` lists the feature models compared on the same data in each
    repetition: ``"oracle"`` (true mixture; synthetic and break data only),
    ``"gmm"`` (EM with ``k`` components, ``k=None`` uses the true count),
    ``"gmm-aic"`` (EM with ``k`` chosen by AIC over ``k_range``) and
    ``"gaussian"`` (one component); ``"gmm:K"`` fits exactly ``K``
    components. ``sweep`` maps one data parameter to a
    list of values; every value is run for every repetition.
    """

    name: str = "custom"
    dataset: str = "synthetic"
    data: dict = field(default_factory=dict)
    models: list = field(default_factory=lambda: ["gmm"])
    k: Optional[int] = None
    k_range: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    em: dict = field(default_factory=lambda: {"max_iters": 100, "n_restarts": 1, "tol": 1e-5})
    methods: list = field(default_factory=lambda: ["swap-integral"])
    stat: dict = field(default_factory=dict)
    q: list = field(default_factory=lambda: [0.1, 0.2, 0.3])
    offset: int = 1
    repetitions: int = 10
    seed: int = 0
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ValueError(f"unknown dataset {self.dataset!r}; choose from {', '.join(DATASETS)}")
        for m in self.models:
            if m not in MODELS and _fixed_k(m) is None:
                raise ValueError(f"unknown model {m!r}; choose from {', '.join(MODELS)} or gmm:K")
        if self.repetitions < 0:
            raise ValueError("repetitions must be non-negative")
        for q in self.q:
            if not 0 < q < 1:
                raise ValueError(f"q must lie in (0, 1), got {q}")
        if len(self.sweep) > 1:
            raise ValueError("sweep supports a single parameter")
        self.models = list(self.models)
        self.methods = list(self.methods)
        self.q = [float(q) for q in self.q]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)


ROW_FIELDS = ("sweep_value", "repetition", "seed", "model", "k", "method", "q", "fdp", "power",
              "n_selected", "threshold")


@dataclass
class ExperimentResult:
    config: dict
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def summary(self) -> list:
        """Mean FDP (empirical FDR), mean power and their standard errors per group."""
        groups: dict = {}
        for r in self.rows:
            key = (r["sweep_value"], r["model"], r["method"], r["q"])
            groups.setdefault(key, []).append(r)
        out = []
        for key in sorted(groups, key=lambda t: tuple(str(v) if v is None else v for v in t)):
            rs = groups[key]
            fdp = np.array([r["fdp"] for r in rs])
            power = np.array([r["power"] for r in rs])
            m = len(rs)
            se = (lambda v: float(v.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0)
            out.append({
                "sweep_value": key[0], "model": key[1], "method": key[2], "q": key[3],
                "repetitions": m, "fdr": float(fdp.mean()), "fdr_se": se(fdp),
                "power": float(power.mean()), "power_se": se(power),
                "mean_k": float(np.mean([r["k"] for r in rs])),
                "mean_selected": float(np.mean([r["n_selected"] for r in rs])),
            })
        return out

    def lookup(self, model: str, method: str, q: float, sweep_value=None) -> dict:
        for s in self.summary():
            if (s["model"], s["method"], s["sweep_value"]) == (model, method, sweep_value) \
                    and abs(s["q"] - q) < 1e-12:
                return s
        raise KeyError((model, method, q, sweep_value))


def _generate(cfg: ExperimentConfig, data: dict, rng):
    if cfg.dataset == "synthetic":
        spec = SyntheticSpec(**data)
        X, Y, nn, model = generate_synthetic(spec, rng, return_model=True)
        return X, Y, nn, model, spec.l
    if cfg.dataset == "break":
        spec = BreakSpec(**data)
        X, Y, nn, model = generate_break_experiment(rng, spec, return_model=True)
        return X, Y, nn, model, spec.l
    spec = TMixtureSpec(**data)
    X, Y, nn = generate_t_experiment(spec, rng)
    return X, Y, nn, None, spec.l


def _fixed_k(name: str):
    if isinstance(name, str) and name.startswith("gmm:"):
        try:
            k = int(name[4:])
        except ValueError:
            return None
        return k if k >= 1 else None
    return None


def _feature_model(cfg, which, X, true_model, true_l, rng):
    em = gmm.EmConfig(**{**cfg.em, "seed": int(rng.integers(2 ** 31))})
    if which == "oracle":
        if true_model is None:
            raise ValueError("oracle model is not available for this dataset")
        return true_model
    if which == "gaussian":
        return gmm.fit_em(X, 1, em)
    if which == "gmm":
        return gmm.fit_em(X, cfg.k or true_l, em)
    if _fixed_k(which) is not None:
        return gmm.fit_em(X, _fixed_k(which), em)
    model, _ = gmm.select_k_aic(X, cfg.k_range, em)
    return model


def _run_one(cfg: ExperimentConfig, data: dict, sweep_value, rep: int, stat_cfg: StatConfig):
    seed_seq = np.random.SeedSequence([cfg.seed, rep])
    data_rng, *model_rngs = [np.random.default_rng(s) for s in seed_seq.spawn(1 + 2 * len(cfg.models))]
    X, Y, nonnulls, true_model, true_l = _generate(cfg, data, data_rng)
    rows = []
    for i, which in enumerate(cfg.models):
        fm = _feature_model(cfg, which, X, true_model, true_l, model_rngs[2 * i])
        Xk = sample_mixture_knockoffs(MixtureKnockoffSampler(fm), X, model_rngs[2 * i + 1])
        stats = compute_statistics(X, Xk, Y, cfg.methods, replace(stat_cfg, seed=rep))
        for method in cfg.methods:
            for q in cfg.q:
                sel = select(stats[method].w, q, cfg.offset)
                fdp, power = evaluate(sel, nonnulls, X.shape[1])
                rows.append({"sweep_value": sweep_value, "repetition": rep, "seed": cfg.seed,
                             "model": which, "k": fm.num_components, "method": method, "q": q,
                             "fdp": fdp, "power": power, "n_selected": sel.size,
                             "threshold": sel.threshold})
    return rows


def run_experiment(config: ExperimentConfig, progress: Callable | None = None) -> ExperimentResult:
    """Run every repetition (and sweep value); failures are recorded, not raised."""
    cfg = config
    stat_cfg = StatConfig(**cfg.stat)
    result = ExperimentResult(cfg.to_dict())
    if cfg.sweep:
        (param, values), = cfg.sweep.items()
        settings = [(v, {**cfg.data, param: v}) for v in values]
    else:
        settings = [(None, dict(cfg.data))]
    for sweep_value, data in settings:
        for rep in range(cfg.repetitions):
            try:
                result.rows.extend(_run_one(cfg, data, sweep_value, rep, stat_cfg))
            except (ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
                result.failures.append({"sweep_value": sweep_value, "repetition": rep,
                                        "error": f"{type(exc).__name__}: {exc}"})
            if progress is not None:
                progress(sweep_value, rep)
    return result


# ---------------------------------------------------------------------------
# presets

PRESETS = {
    "break-fdr": dict(
        name="break-fdr", dataset="break", models=["gmm", "gaussian"], methods=["logistic"],
        q=[0.2], repetitions=100, stat={"logistic_l2": 0.1},
    ),
    "power-sweep": dict(
        name="power-sweep", dataset="synthetic", data={"l": 5}, models=["gmm"],
        methods=["lcd", "swap", "swap-integral", "permutation"], q=[0.1, 0.2, 0.3],
        repetitions=100, sweep={"l": [5, 10, 20]},
    ),
    "t-robustness": dict(
        name="t-robustness", dataset="t-mixture", data={},
        models=["gmm:1", "gmm:2", "gmm:3", "gmm:5", "gmm:8", "gmm-aic"], k_range=[1, 2, 3, 4, 5, 6, 7, 8],
        methods=["logistic"], q=[0.2], repetitions=100, sweep={"dof": [3, 5, 10, 30]},
        stat={"logistic_l2": 1e-2},
    ),
}


def preset(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return ExperimentConfig(**{**PRESETS[name], **overrides})
