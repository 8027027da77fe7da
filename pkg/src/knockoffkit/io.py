"""Text formats: CSV matrices, JSON model/network/config documents, report tables.

Model file (``format: "knockoffkit-gmm"``, ``version: 1``)::

    {"format": "knockoffkit-gmm", "version": 1, "n_components": l, "dim": d,
     "weights": [...], "means": [[...], ...],
     "covariances": [[row-major d*d values], ...], "columns": [...]}

Network file (``format: "knockoffkit-bn"``, ``version: 1``)::

    {"format": "knockoffkit-bn", "version": 1,
     "nodes": [{"id": "H", "kind": "discrete", "parents": [], "observed": false,
                "conjugate": "independent-resample", "states": 2, "cpt": [...]},
               {"id": "X", "kind": "gaussian", "parents": ["H"], "observed": true,
                "conjugate": "gaussian-conditional", "dim": 2,
                "means": [...], "covariances": [...]}]}

Nested lists follow the array shapes documented on ``NodeSpec``. Floats are
written with 17 significant digits so every value round-trips exactly.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path

import numpy as np

from .bayes_net import BayesNet, NodeSpec, validate_and_index
from .gmm import GaussianMixture

__all__ = [
    "InputError",
    "format_float",
    "read_csv",
    "write_csv",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
    "net_to_dict",
    "net_from_dict",
    "save_net",
    "load_net",
    "write_table",
    "read_json",
    "write_json",
]

GMM_FORMAT = "knockoffkit-gmm"
BN_FORMAT = "knockoffkit-bn"
VERSION = 1


class InputError(ValueError):
    """Malformed user input (bad file, bad value); mapped to exit code 2 by the CLI."""


def format_float(x) -> str:
    """Shortest decimal text that parses back to exactly ``x`` (at most 17 significant digits)."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def read_csv(path, label: str | None = None):
    """Read a header + numeric body CSV.

    Returns ``(X, columns, y)``, where ``y`` is the label column (or ``None``)
    and ``columns`` names the feature columns in ``X``.

    Raises
    ------
    InputError
        Missing header, ragged rows or non-numeric cells (with line and column).
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except UnicodeDecodeError as exc:
        raise InputError(f"{path} is not valid UTF-8") from exc
    reader = csv.reader(_io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise InputError(f"{path}: empty file, a header row is required") from None
    header = [h.strip() for h in header]
    if not header or any(h == "" for h in header):
        raise InputError(f"{path}: line 1: header has an empty column name")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(c.strip() == "" for c in row):
            continue
        if len(row) != len(header):
            raise InputError(f"{path}: line {lineno}: expected {len(header)} fields, found {len(row)}")
        vals = []
        for col, cell in zip(header, row):
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"{path}: line {lineno}, column {col!r}: "
                                 f"cannot parse {cell.strip()!r} as a number") from None
            if not math.isfinite(v):
                raise InputError(f"{path}: line {lineno}, column {col!r}: value must be finite")
            vals.append(v)
        rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    M = np.array(rows, dtype=float)
    y = None
    columns = list(header)
    if label is not None:
        if label not in header:
            raise InputError(f"{path}: label column {label!r} not found in header")
        j = header.index(label)
        y = M[:, j]
        M = np.delete(M, j, axis=1)
        columns.pop(j)
        if np.all(y == np.round(y)):
            y = y.astype(int)
    return M, columns, y


def write_csv(path, X, columns) -> None:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != len(columns):
        raise ValueError("one column name per matrix column is required")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in X:
            w.writerow([format_float(v) for v in row])


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def write_json(path, data) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=False)
        fh.write("\n")


# ---------------------------------------------------------------------------
# mixture models

def model_to_dict(model: GaussianMixture, columns=None) -> dict:
    l, d = model.num_components, model.dim
    return {
        "format": GMM_FORMAT,
        "version": VERSION,
        "n_components": l,
        "dim": d,
        "weights": [float(w) for w in model.weights],
        "means": [[float(v) for v in m] for m in model.means],
        "covariances": [[float(v) for v in c.reshape(-1)] for c in model.covariances],
        "columns": list(columns) if columns is not None else None,
    }


def _check_format(data, fmt):
    if not isinstance(data, dict) or data.get("format") != fmt:
        raise InputError(f"not a {fmt} document")
    if data.get("version") != VERSION:
        raise InputError(f"unsupported {fmt} version {data.get('version')!r}; expected {VERSION}")


def model_from_dict(data: dict) -> GaussianMixture:
    _check_format(data, GMM_FORMAT)
    try:
        l, d = int(data["n_components"]), int(data["dim"])
        weights = np.array(data["weights"], dtype=float)
        means = np.array(data["means"], dtype=float).reshape(l, d)
        covs = np.array(data["covariances"], dtype=float).reshape(l, d, d)
        return GaussianMixture(weights, means, covs)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid model document: {exc}") from exc


def save_model(path, model: GaussianMixture, columns=None) -> None:
    write_json(path, model_to_dict(model, columns))


def load_model(path) -> tuple:
    """Return ``(model, columns)``; ``columns`` may be ``None``."""
    data = read_json(path)
    return model_from_dict(data), data.get("columns")


# ---------------------------------------------------------------------------
# Bayesian networks

def _tolist(a):
    return None if a is None else np.asarray(a, dtype=float).tolist()


def net_to_dict(net: BayesNet) -> dict:
    nodes = []
    for nd in net.nodes:
        item = {"id": nd.id, "kind": nd.kind, "parents": list(nd.parents), "observed": bool(nd.observed),
                "conjugate": nd.conjugate}
        if nd.is_discrete:
            item.update(states=int(nd.states), cpt=_tolist(nd.cpt))
        else:
            item.update(dim=int(nd.dim), means=_tolist(nd.means), covariances=_tolist(nd.covariances))
        nodes.append(item)
    return {"format": BN_FORMAT, "version": VERSION, "nodes": nodes}


def net_from_dict(data: dict) -> BayesNet:
    _check_format(data, BN_FORMAT)
    allowed = {"id", "kind", "parents", "observed", "conjugate", "states", "cpt", "dim", "means", "covariances"}
    specs = []
    try:
        for item in data["nodes"]:
            extra = set(item) - allowed
            if extra:
                raise InputError(f"node {item.get('id')!r}: unknown fields {sorted(extra)}")
            specs.append(NodeSpec(**item))
        return validate_and_index(specs)
    except InputError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid network document: {exc}") from exc


def save_net(path, net: BayesNet) -> None:
    write_json(path, net_to_dict(net))


def load_net(path) -> BayesNet:
    return net_from_dict(read_json(path))


# ---------------------------------------------------------------------------
# tables

def write_table(path, rows: list, fieldnames) -> None:
    """Write dict rows as CSV; floats use the exact round-trip format."""
    def cell(v):
        if isinstance(v, (bool, np.bool_)):
            return "1" if v else "0"
        if isinstance(v, (float, np.floating)):
            return format_float(v)
        return "" if v is None else str(v)

    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fieldnames)
        for r in rows:
            w.writerow([cell(r.get(k)) for k in fieldnames])
