"""Knockoffs for features observed at the leaves of a Bayesian network.

A network is a list of nodes in topological order. Hidden nodes must be
discrete (the posterior over hidden states is computed exactly by
enumeration); observed nodes are discrete or conditionally Gaussian given
discrete parents, and may not have descendants.

Sampling follows the sequential local-knockoff scheme: draw the hidden nodes
from their exact posterior, then visit nodes in order and draw each local
knockoff from an exchangeable conjugate of ``P(node | Markov blanket)``,
conditioning on knockoffs of earlier blanket members and originals of later
ones. Only the observed knockoffs are returned.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .knockoff_core import KnockoffGaussianParams, compute_diag, gaussian_knockoff_params
from .gmm import GaussianMixture

__all__ = [
    "ENUMERATION_CAP",
    "CONJUGATES",
    "NodeSpec",
    "BayesNet",
    "UnsupportedModelError",
    "validate_and_index",
    "hidden_posterior",
    "sample_posterior_hidden",
    "forward_sample",
    "sample_bn_knockoffs",
    "sample_latent_knockoff_simple",
    "enumerate_joint",
    "enumerate_latent_simple",
    "observed_marginal",
    "swap_table",
    "mixture_as_bayes_net",
    "random_discrete_net",
]

ENUMERATION_CAP = 2 ** 20
CONJUGATES = ("independent-resample", "gaussian-conditional", "identity")


class UnsupportedModelError(ValueError):
    """The network is outside what exact enumeration can handle."""


@dataclass
class NodeSpec:
    """One node of the network.

    Discrete nodes carry ``states`` and a ``cpt`` of shape
    ``(*parent_states, states)``. Gaussian nodes carry ``dim``, ``means`` of
    shape ``(*parent_states, dim)`` and ``covariances`` of shape
    ``(*parent_states, dim, dim)``; their parents must be discrete.
    """

    id: str
    kind: str = "discrete"
    parents: tuple = ()
    observed: bool = False
    conjugate: Optional[str] = "independent-resample"
    states: int = 0
    cpt: Optional[np.ndarray] = None
    dim: int = 0
    means: Optional[np.ndarray] = None
    covariances: Optional[np.ndarray] = None

    def __post_init__(self):
        self.parents = tuple(self.parents)
        if self.kind == "discrete":
            self.cpt = np.asarray(self.cpt, dtype=float)
            if self.states <= 0:
                self.states = self.cpt.shape[-1]
            if self.cpt.shape[-1] != self.states:
                raise ValueError(f"node {self.id}: cpt last axis must have {self.states} states")
            if np.any(self.cpt < 0) or not np.allclose(self.cpt.sum(-1), 1.0, atol=1e-12, rtol=0):
                raise ValueError(f"node {self.id}: cpt rows must be probability vectors")
        elif self.kind == "gaussian":
            self.means = np.asarray(self.means, dtype=float)
            if self.dim <= 0:
                self.dim = self.means.shape[-1]
            self.covariances = np.asarray(self.covariances, dtype=float)
            if self.covariances.shape != self.means.shape + (self.dim,):
                raise ValueError(f"node {self.id}: covariances must have shape (*parent_states, dim, dim)")
        else:
            raise ValueError(f"node {self.id}: unknown kind {self.kind!r}")
        if self.conjugate is not None and self.conjugate not in CONJUGATES:
            raise ValueError(f"node {self.id}: unknown conjugate {self.conjugate!r}; expected one of {CONJUGATES}")
        if self.conjugate == "gaussian-conditional" and self.kind != "gaussian":
            raise ValueError(f"node {self.id}: gaussian-conditional conjugate needs a gaussian node")

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"

    @property
    def width(self) -> int:
        """Number of data columns this node occupies."""
        return 1 if self.is_discrete else self.dim


@dataclass
class BayesNet:
    """A validated network. Build with :func:`validate_and_index`."""

    nodes: tuple
    index: dict
    children: tuple
    markov_blankets: tuple
    observed: tuple
    hidden: tuple
    _gauss_cache: dict = field(default_factory=dict, repr=False)

    def node(self, key) -> NodeSpec:
        return self.nodes[self.index[key] if isinstance(key, str) else key]

    @property
    def m(self) -> int:
        return len(self.nodes)

    def mb_ids(self, key) -> list:
        i = self.index[key] if isinstance(key, str) else key
        return [self.nodes[j].id for j in self.markov_blankets[i]]

    def observed_width(self) -> int:
        return sum(self.nodes[i].width for i in self.observed)

    def knockoff_params(self, i: int, config: tuple) -> KnockoffGaussianParams:
        key = (i, config)
        if key not in self._gauss_cache:
            node = self.nodes[i]
            mu, cov = node.means[config], node.covariances[config]
            self._gauss_cache[key] = gaussian_knockoff_params(mu, cov, compute_diag(cov))
        return self._gauss_cache[key]


def _find_cycle(ids, parents):
    graph = {i: [p for p in parents[i] if p in parents] for i in ids}
    state = {}

    def visit(u):
        state[u] = 1
        for v in graph[u]:
            if state.get(v) == 1 or (v not in state and visit(v)):
                return True
        state[u] = 2
        return False

    return any(u not in state and visit(u) for u in ids)


def validate_and_index(nodes: Sequence[NodeSpec]) -> BayesNet:
    """Check the graph and derive children and Markov blankets.

    Raises ``ValueError`` on a cycle, a parent listed after its child, an
    unknown parent, an observed node with descendants, a hidden continuous
    node, or a Gaussian node with a continuous parent.
    """
    nodes = tuple(nodes)
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        raise ValueError("node ids must be unique")
    index = {nid: i for i, nid in enumerate(ids)}
    parents = {n.id: n.parents for n in nodes}
    for n in nodes:
        for p in n.parents:
            if p not in index:
                raise ValueError(f"node {n.id}: unknown parent {p!r}")
    if _find_cycle(ids, parents):
        raise ValueError("the edge relation contains a cycle")
    for n in nodes:
        for p in n.parents:
            if index[p] >= index[n.id]:
                raise ValueError(f"nodes are not in topological order: {p} must precede {n.id}")
    m = len(nodes)
    children = [[] for _ in range(m)]
    for i, n in enumerate(nodes):
        for p in n.parents:
            children[index[p]].append(i)
    for i, n in enumerate(nodes):
        if n.observed and children[i]:
            raise ValueError(f"observed node {n.id} has descendants")
        if not n.observed and not n.is_discrete:
            raise UnsupportedModelError(f"hidden node {n.id} must be discrete")
        for p in n.parents:
            pn = nodes[index[p]]
            if not pn.is_discrete:
                raise UnsupportedModelError(f"node {n.id}: parent {p} must be discrete")
        expected = tuple(nodes[index[p]].states for p in n.parents)
        table = n.cpt if n.is_discrete else n.means
        lead = table.shape[:-1]
        if lead != expected:
            raise ValueError(f"node {n.id}: parameter table has parent shape {lead}, expected {expected}")
    blankets = []
    for i, n in enumerate(nodes):
        mb = {index[p] for p in n.parents}
        for c in children[i]:
            mb.add(c)
            mb.update(index[p] for p in nodes[c].parents)
        mb.discard(i)
        blankets.append(tuple(sorted(mb)))
    observed = tuple(i for i, n in enumerate(nodes) if n.observed)
    hidden = tuple(i for i, n in enumerate(nodes) if not n.observed)
    return BayesNet(nodes, index, tuple(tuple(c) for c in children), tuple(blankets), observed, hidden)


# ---------------------------------------------------------------------------
# local conditionals, vectorised over rows

def _parent_config(net, i, vals):
    return tuple(vals[net.index[p]] for p in net.nodes[i].parents)


def _local_logp(net, i, vals, value=None):
    """log P(x_i | parents) per row; ``value`` overrides ``vals[i]``."""
    node = net.nodes[i]
    x = vals[i] if value is None else value
    cfg = _parent_config(net, i, vals)
    if node.is_discrete:
        with np.errstate(divide="ignore"):
            return np.log(node.cpt[cfg + (x,)])
    return _gaussian_logpdf(node, cfg, x)


def _broadcast_cfg(cfg, n):
    return tuple(np.broadcast_to(np.asarray(c), (n,)) for c in cfg)


def _gaussian_logpdf(node, cfg, x):
    x = np.atleast_2d(x)
    n = x.shape[0]
    out = np.empty(n)
    lead = node.means.shape[:-1]
    flat = np.ravel_multi_index(_broadcast_cfg(cfg, n), lead) if cfg else np.zeros(n, dtype=int)
    means = node.means.reshape(-1, node.dim)
    covs = node.covariances.reshape(-1, node.dim, node.dim)
    for c in np.unique(flat):
        idx = flat == c
        L = np.linalg.cholesky(covs[c])
        z = np.linalg.solve(L, (x[idx] - means[c]).T)
        out[idx] = -0.5 * (node.dim * np.log(2 * np.pi) + 2 * np.log(np.diag(L)).sum() + (z * z).sum(0))
    return out


def _blanket_logits(net, i, vals, n):
    """Unnormalised log P(x_i = s | MB(i)) per row and state, shape (n, states)."""
    node = net.nodes[i]
    out = np.empty((n, node.states))
    for s in range(node.states):
        sv = np.full(n, s)
        total = _local_logp(net, i, vals, sv)
        if len(net.children[i]):
            trial = dict(vals)
            trial[i] = sv
            for c in net.children[i]:
                total = total + _local_logp(net, c, trial)
        out[:, s] = np.broadcast_to(total, (n,))
    return out


def _blanket_probs(net, i, vals, n):
    logits = _blanket_logits(net, i, vals, n)
    norm = logsumexp(logits, axis=1, keepdims=True)
    if np.any(~np.isfinite(norm)):
        raise ValueError(f"node {net.nodes[i].id}: blanket configuration has zero probability")
    return np.exp(logits - norm)


def _categorical(probs, rng):
    u = rng.random(probs.shape[0])
    cdf = np.cumsum(probs, axis=1)
    return np.minimum((u[:, None] >= cdf).sum(1), probs.shape[1] - 1)


def _conjugate_sample(net, i, cond, n, rng):
    """Draw the local knockoff of node ``i``; ``cond`` holds MB(i) and x_i."""
    node = net.nodes[i]
    kind = node.conjugate
    if kind is None:
        raise ValueError(f"node {node.id} has no conjugate configured")
    x_i = cond[i]
    if kind == "identity":
        return np.array(x_i, copy=True)
    if node.is_discrete:
        return _categorical(_blanket_probs(net, i, cond, n), rng)
    cfg = _broadcast_cfg(_parent_config(net, i, cond), n)
    lead = node.means.shape[:-1]
    flat = np.ravel_multi_index(cfg, lead) if cfg else np.zeros(n, dtype=int)
    z = rng.standard_normal((n, node.dim))
    out = np.empty((n, node.dim))
    for c in np.unique(flat):
        idx = flat == c
        config = np.unravel_index(c, lead) if lead else ()
        config = tuple(int(v) for v in config)
        if kind == "independent-resample":
            L = np.linalg.cholesky(node.covariances[config])
            out[idx] = node.means[config] + z[idx] @ L.T
        else:
            p = net.knockoff_params(i, config)
            out[idx] = p.conditional_mean(x_i[idx]) + z[idx] @ p.cond_cov_chol.T
    return out


def _conjugate_prob(net, i, cond, x_tilde, n):
    """Q(x_tilde_i | cond) per row, discrete nodes only."""
    node = net.nodes[i]
    if node.conjugate == "identity":
        return (np.asarray(x_tilde) == np.asarray(cond[i])).astype(float)
    probs = _blanket_probs(net, i, cond, n)
    return probs[np.arange(n), x_tilde]


# ---------------------------------------------------------------------------
# posterior over hidden nodes

def _hidden_states(net):
    arities = [net.nodes[h].states for h in net.hidden]
    total = int(np.prod(arities)) if arities else 1
    if total > ENUMERATION_CAP:
        raise UnsupportedModelError(
            f"hidden joint state space has {total} states, above the enumeration cap {ENUMERATION_CAP}"
        )
    if not arities:
        return np.zeros((1, 0), dtype=int)
    return np.array(list(itertools.product(*[range(a) for a in arities])), dtype=int)


def split_observed(net: BayesNet, X_O) -> dict:
    """Map the columns of ``X_O`` to observed node values."""
    X_O = np.atleast_2d(np.asarray(X_O))
    if X_O.shape[1] != net.observed_width():
        raise ValueError(f"expected {net.observed_width()} observed columns, got {X_O.shape[1]}")
    vals, col = {}, 0
    for i in net.observed:
        node = net.nodes[i]
        if node.is_discrete:
            v = X_O[:, col]
            iv = np.rint(v).astype(int)
            if np.any(iv != v) or np.any(iv < 0) or np.any(iv >= node.states):
                raise ValueError(f"column {col} (node {node.id}) must hold states 0..{node.states - 1}")
            vals[i] = iv
        else:
            vals[i] = np.asarray(X_O[:, col:col + node.dim], dtype=float)
        col += node.width
    return vals


def join_observed(net: BayesNet, vals: dict, n: int) -> np.ndarray:
    cols = []
    for i in net.observed:
        v = vals[i]
        cols.append(v.reshape(n, -1).astype(float))
    return np.hstack(cols) if cols else np.empty((n, 0))


def hidden_posterior(net: BayesNet, x_O) -> tuple:
    """Exact ``P(X_H | X_O)`` by enumeration.

    Returns ``(states, probs)``: the (S, |H|) array of hidden joint states and
    an (n, S) array of posterior probabilities.
    """
    vals = x_O if isinstance(x_O, dict) else split_observed(net, x_O)
    n = len(next(iter(vals.values()))) if vals else 1
    states = _hidden_states(net)
    S = states.shape[0]
    logj = np.zeros((n, S))
    for s in range(S):
        full = dict(vals)
        for col, h in enumerate(net.hidden):
            full[h] = np.full(n, states[s, col])
        total = np.zeros(n)
        for i in range(net.m):
            total = total + _local_logp(net, i, full)
        logj[:, s] = total
    norm = logsumexp(logj, axis=1, keepdims=True)
    if np.any(~np.isfinite(norm)):
        raise ValueError("an observed row has zero probability under the network")
    return states, np.exp(logj - norm)


def sample_posterior_hidden(net: BayesNet, x_O, rng) -> dict:
    """Exact draw of the hidden nodes given the observed ones, one per row."""
    rng = np.random.default_rng(rng)
    states, probs = hidden_posterior(net, x_O)
    pick = _categorical(probs, rng)
    return {h: states[pick, col] for col, h in enumerate(net.hidden)}


def forward_sample(net: BayesNet, n: int, rng, return_hidden: bool = False):
    """Ancestral sampling; returns the observed columns (and optionally all values)."""
    rng = np.random.default_rng(rng)
    vals = {}
    for i, node in enumerate(net.nodes):
        cfg = _broadcast_cfg(_parent_config(net, i, vals), n)
        if node.is_discrete:
            probs = node.cpt[cfg] if cfg else np.broadcast_to(node.cpt, (n, node.states))
            vals[i] = _categorical(np.atleast_2d(probs), rng)
        else:
            lead = node.means.shape[:-1]
            flat = np.ravel_multi_index(cfg, lead) if cfg else np.zeros(n, dtype=int)
            z = rng.standard_normal((n, node.dim))
            out = np.empty((n, node.dim))
            for c in np.unique(flat):
                idx = flat == c
                config = tuple(int(v) for v in np.unravel_index(c, lead)) if lead else ()
                L = np.linalg.cholesky(node.covariances[config])
                out[idx] = node.means[config] + z[idx] @ L.T
            vals[i] = out
    X_O = join_observed(net, vals, n)
    return (X_O, vals) if return_hidden else X_O


def sample_bn_knockoffs(net: BayesNet, X_O, rng, return_all: bool = False):
    """Knockoffs of the observed columns ``X_O`` (one row per sample).

    Parameters
    ----------
    net : BayesNet
    X_O : (n, w) array
        Observed node values laid out node by node (discrete nodes take one
        integer column, Gaussian nodes ``dim`` columns).
    rng : numpy Generator or seed
    return_all : bool
        Also return the dicts of original and knockoff values for every node.
    """
    rng = np.random.default_rng(rng)
    for i, node in enumerate(net.nodes):
        if node.conjugate is None:
            raise ValueError(f"node {node.id} has no conjugate configured")
    vals = split_observed(net, X_O)
    n = np.atleast_2d(X_O).shape[0]
    vals.update(sample_posterior_hidden(net, vals, rng))
    knock = {}
    for i in range(net.m):
        cond = {j: (knock[j] if j < i else vals[j]) for j in net.markov_blankets[i]}
        cond[i] = vals[i]
        knock[i] = _conjugate_sample(net, i, cond, n, rng)
    X_tilde = join_observed(net, {i: knock[i] for i in net.observed}, n)
    if return_all:
        return X_tilde, vals, knock
    return X_tilde


def sample_latent_knockoff_simple(net: BayesNet, x, rng) -> np.ndarray:
    """Three-step knockoff for a net with one hidden parent and one observed child.

    ``H ~ P(H | X)``, ``H_tilde ~ Q(. | H, X)``, ``X_tilde ~ Q(. | X, H_tilde)``.
    """
    rng = np.random.default_rng(rng)
    if net.m != 2 or len(net.hidden) != 1 or len(net.observed) != 1:
        raise ValueError("expected exactly one hidden node followed by one observed node")
    h, o = net.hidden[0], net.observed[0]
    if net.nodes[o].parents != (net.nodes[h].id,):
        raise ValueError("the observed node must have the hidden node as its only parent")
    if net.nodes[h].conjugate is None or net.nodes[o].conjugate is None:
        raise ValueError("both conjugates must be supplied")
    vals = split_observed(net, x)
    n = np.atleast_2d(x).shape[0]
    vals[h] = sample_posterior_hidden(net, vals, rng)[h]
    h_tilde = _conjugate_sample(net, h, {h: vals[h], o: vals[o]}, n, rng)
    x_tilde = _conjugate_sample(net, o, {h: h_tilde, o: vals[o]}, n, rng)
    return join_observed(net, {o: x_tilde}, n)


# ---------------------------------------------------------------------------
# exact enumeration oracle

def _require_discrete(net):
    for node in net.nodes:
        if not node.is_discrete:
            raise UnsupportedModelError("enumeration needs a fully discrete network")


def enumerate_joint(net: BayesNet, keep: str = "observed") -> np.ndarray:
    """Exact probability table of ``(X, X_tilde)`` under the sequential sampler.

    Every full assignment of originals and knockoffs is weighted by
    ``P(x) * prod_i Q_i(x_tilde_i | ...)``; hidden coordinates are then
    summed out. With ``keep="observed"`` the result has axes
    ``(x_O..., x_tilde_O...)``; with ``keep="all"`` it keeps every node,
    ``(x_1..x_m, x_tilde_1..x_tilde_m)``.
    """
    _require_discrete(net)
    arities = [node.states for node in net.nodes]
    size = int(np.prod(arities)) ** 2
    if size > ENUMERATION_CAP:
        raise UnsupportedModelError(
            f"joint state space has {size} cells, above the enumeration cap {ENUMERATION_CAP}"
        )
    grid = np.indices(arities + arities).reshape(2 * net.m, -1)
    n = grid.shape[1]
    vals = {i: grid[i] for i in range(net.m)}
    knock = {i: grid[net.m + i] for i in range(net.m)}
    prob = np.ones(n)
    for i in range(net.m):
        prob = prob * np.exp(_local_logp(net, i, vals))
    for i in range(net.m):
        cond = {j: (knock[j] if j < i else vals[j]) for j in net.markov_blankets[i]}
        cond[i] = vals[i]
        live = prob > 0
        q = np.zeros(n)
        if np.any(live):
            sub = {k: v[live] for k, v in cond.items()}
            q[live] = _conjugate_prob(net, i, sub, knock[i][live], int(live.sum()))
        prob = prob * q
    table = prob.reshape(arities + arities)
    if keep == "all":
        return table
    if keep != "observed":
        raise ValueError("keep must be 'observed' or 'all'")
    hidden_axes = tuple(net.hidden) + tuple(net.m + h for h in net.hidden)
    return table.sum(axis=hidden_axes)


def enumerate_latent_simple(net: BayesNet) -> np.ndarray:
    """Exact table over ``(h, x, h_tilde, x_tilde)`` for the three-step sampler.

    Written directly from the three sampling steps, independently of
    :func:`enumerate_joint`.
    """
    _require_discrete(net)
    if net.m != 2 or len(net.hidden) != 1:
        raise ValueError("expected a two-node hidden -> observed network")
    hn, xn = net.nodes[net.hidden[0]], net.nodes[net.observed[0]]
    prior = hn.cpt                                  # (H,)
    lik = xn.cpt                                    # (H, X)
    joint_hx = prior[:, None] * lik                 # P(h, x)
    px = joint_hx.sum(0)                            # P(x)
    post = joint_hx / px                            # P(h | x), (H, X)
    nh, nx = lik.shape
    if hn.conjugate == "identity":
        qh = np.einsum("ab,x->axb", np.eye(nh), np.ones(nx))        # (h, x, h~)
    else:
        qh = np.broadcast_to(post.T[None, :, :], (nh, nx, nh))     # P(h~ | x)
    if xn.conjugate == "identity":
        qx = np.broadcast_to(np.eye(nx)[None], (nh, nx, nx))        # (h~, x, x~)
    else:
        qx = np.broadcast_to(lik[:, None, :], (nh, nx, nx))         # P(x~ | h~)
    # P(h, x, h~, x~) = P(x) P(h|x) Q(h~|h,x) Q(x~|x,h~)
    return np.einsum("x,hx,hxa,axb->hxab", px, post, qh, qx)


def observed_marginal(net: BayesNet) -> np.ndarray:
    """Exact marginal of the observed nodes by forward enumeration."""
    _require_discrete(net)
    arities = [node.states for node in net.nodes]
    grid = np.indices(arities).reshape(net.m, -1)
    vals = {i: grid[i] for i in range(net.m)}
    prob = np.ones(grid.shape[1])
    for i in range(net.m):
        prob = prob * np.exp(_local_logp(net, i, vals))
    return prob.reshape(arities).sum(axis=tuple(net.hidden))


def swap_table(table: np.ndarray, subset, half: int) -> np.ndarray:
    """Exchange axes ``j`` and ``half + j`` for every ``j`` in ``subset``."""
    axes = list(range(table.ndim))
    for j in subset:
        axes[j], axes[half + j] = axes[half + j], axes[j]
    return np.transpose(table, axes)


# ---------------------------------------------------------------------------
# builders

def mixture_as_bayes_net(model: GaussianMixture, hidden_conjugate: str = "independent-resample",
                         observed_conjugate: str = "gaussian-conditional") -> BayesNet:
    """Express a Gaussian mixture as ``K -> X`` with ``X`` a Gaussian leaf."""
    k = NodeSpec("K", "discrete", (), False, hidden_conjugate, states=model.num_components,
                 cpt=np.asarray(model.weights))
    x = NodeSpec("X", "gaussian", ("K",), True, observed_conjugate, dim=model.dim,
                 means=np.asarray(model.means), covariances=np.asarray(model.covariances))
    return validate_and_index([k, x])


def random_discrete_net(rng, max_nodes: int = 4, max_states: int = 3, conjugates=None,
                        n_nodes: Optional[int] = None, max_observed: Optional[int] = None) -> BayesNet:
    """Random fully discrete network with hidden nodes first and observed leaves last.

    CPT rows are Dirichlet(1) draws. Conjugates are drawn from ``conjugates``
    (default: independent-resample or identity for each node).
    """
    rng = np.random.default_rng(rng)
    m = int(n_nodes or rng.integers(2, max_nodes + 1))
    hi = m - 1 if max_observed is None else min(m - 1, max_observed)
    n_obs = int(rng.integers(1, hi + 1))
    n_hid = m - n_obs
    choices = conjugates or ("independent-resample", "identity")
    nodes = []
    for i in range(m):
        observed = i >= n_hid
        pool = list(range(n_hid)) if observed else list(range(i))
        parents = []
        if pool:
            k = int(rng.integers(1 if observed else 0, len(pool) + 1))
            parents = sorted(rng.choice(pool, size=k, replace=False).tolist())
        states = int(rng.integers(2, max_states + 1))
        shape = tuple(nodes[p].states for p in parents) + (states,)
        cpt = rng.dirichlet(np.ones(states), size=shape[:-1]) if parents else rng.dirichlet(np.ones(states))
        conj = choices[int(rng.integers(len(choices)))]
        nodes.append(NodeSpec(f"n{i}", "discrete", tuple(f"n{p}" for p in parents), observed, conj,
                              states=states, cpt=cpt))
    return validate_and_index(nodes)
