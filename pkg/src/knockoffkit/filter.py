"""Data-dependent knockoff threshold, selections and their evaluation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Selection", "threshold", "select", "evaluate"]


@dataclass(frozen=True)
class Selection:
    """Outcome of the knockoff filter.

    ``selected`` holds zero-based feature indices with ``W_j >= threshold``.
    """

    target_q: float
    offset: int
    threshold: float
    selected: tuple

    @property
    def size(self) -> int:
        return len(self.selected)


def _check(W, q, offset):
    W = np.asarray(W, dtype=float).reshape(-1)
    if not np.all(np.isfinite(W)):
        raise ValueError("W must be finite")
    if not 0.0 < q < 1.0:
        raise ValueError(f"target FDR q must lie in (0, 1), got {q}")
    if offset not in (0, 1):
        raise ValueError("offset must be 0 or 1")
    return W


def threshold(W, q: float, offset: int = 1) -> float:
    """Smallest ``t`` among the nonzero ``|W_j|`` whose estimated FDP is at most ``q``.

    The estimate is ``(offset + #{W_j <= -t}) / max(1, #{W_j >= t})``;
    returns ``inf`` when no candidate qualifies.
    """
    W = _check(W, q, offset)
    cands = np.unique(np.abs(W[W != 0]))
    if cands.size == 0:
        return math.inf
    pos = np.sort(W[W > 0])
    neg = np.sort(-W[W < 0])
    n_pos = pos.size - np.searchsorted(pos, cands, side="left")
    n_neg = neg.size - np.searchsorted(neg, cands, side="left")
    ratio = (offset + n_neg) / np.maximum(1, n_pos)
    ok = np.flatnonzero(ratio <= q)
    return float(cands[ok[0]]) if ok.size else math.inf


def select(W, q: float, offset: int = 1) -> Selection:
    W = _check(W, q, offset)
    tau = threshold(W, q, offset)
    chosen = tuple(int(j) for j in np.flatnonzero(W >= tau)) if math.isfinite(tau) else ()
    return Selection(float(q), int(offset), tau, chosen)


def evaluate(selection: Selection | tuple | list, true_nonnulls, d: int | None = None):
    """Return ``(fdp, power)`` of a selection against known nonnull indices."""
    sel = set(selection.selected if isinstance(selection, Selection) else selection)
    nonnull = set(int(j) for j in true_nonnulls)
    if d is not None:
        bad = [j for j in sel | nonnull if not 0 <= j < d]
        if bad:
            raise ValueError(f"feature index out of range: {sorted(bad)}")
    elif any(j < 0 for j in sel | nonnull):
        raise ValueError("feature indices must be non-negative")
    fdp = len(sel - nonnull) / max(1, len(sel))
    power = len(sel & nonnull) / max(1, len(nonnull))
    return fdp, power
