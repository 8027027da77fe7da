"""Command-line interface.

Subcommands: ``fit-model``, ``knockoffs``, ``select``, ``experiment`` and
``print-config``. Every subcommand accepts ``--config FILE`` (a JSON object
whose keys are option names, with dashes or underscores); explicit flags win
over the file. Exit codes: 0 success, 2 input error, 1 internal error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, gmm
from .bayes_net import sample_bn_knockoffs
from .filter import select
from .harness import PRESETS, ExperimentConfig, ROW_FIELDS, preset, run_experiment
from .io import (InputError, load_model, load_net, read_csv, read_json, save_model, write_csv, write_json,
                 write_table)
from .knockoff_core import MixtureKnockoffSampler, sample_mixture_knockoffs
from .statistics import DEFAULT_GRID, METHODS, StatConfig, compute_statistics

__all__ = ["main", "build_parser"]

SUMMARY_FIELDS = ("sweep_value", "model", "method", "q", "repetitions", "fdr", "fdr_se", "power", "power_se",
                  "mean_k", "mean_selected")


class _Fail(Exception):
    def __init__(self, message, code=2):
        super().__init__(message)
        self.code = code


def _parse_range(text: str) -> list:
    """``"1..5"`` or ``"1,2,4"`` -> list of ints."""
    try:
        if ".." in text:
            a, b = text.split("..")
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a range like 1..5 or a list like 1,2,4, got {text!r}")


def _parse_grid(text: str) -> tuple:
    """``"start:stop:step"`` (inclusive stop) or a comma list."""
    try:
        if ":" in text:
            a, b, c = (float(t) for t in text.split(":"))
            if c <= 0 or b <= a:
                raise ValueError
            n = int(math.floor((b - a) / c + 1e-9))
            return tuple(np.round(a + c * np.arange(n + 1), 12))
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a grid like 0:10:0.25, got {text!r}")


def _q_value(text: str) -> float:
    try:
        q = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"q must be a number, got {text!r}")
    if not 0 < q < 1:
        raise argparse.ArgumentTypeError(f"q must lie in (0, 1), got {q}")
    return q


def _layers(text: str) -> tuple:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated widths, got {text!r}")


def _add_common(p):
    p.add_argument("--config", type=Path, help="JSON file of option defaults")
    p.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="knockoffkit", description="Model-X knockoff feature selection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-model", help="fit a Gaussian mixture to a CSV of features")
    _add_common(p)
    p.add_argument("--data", type=Path, help="CSV with header")
    p.add_argument("--label", help="label column to exclude from the features")
    p.add_argument("--k", type=int, help="number of components (default: choose by AIC)")
    p.add_argument("--k-range", type=_parse_range, default=[1, 2, 3, 4, 5], help="AIC search range (default 1..5)")
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--max-iters", type=int, default=300)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", type=Path, help="model JSON to write")

    p = sub.add_parser("knockoffs", help="sample knockoffs for a CSV of features")
    _add_common(p)
    p.add_argument("--data", type=Path)
    p.add_argument("--label", help="label column to exclude from the features")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--model", type=Path, help="mixture model JSON from fit-model")
    src.add_argument("--net", type=Path, help="Bayesian network JSON")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("select", help="compute statistics and run the knockoff filter")
    _add_common(p)
    p.add_argument("--data", type=Path)
    p.add_argument("--label", default="y", help="label column (default y)")
    p.add_argument("--knockoffs", type=Path, help="knockoff CSV (same row order as --data)")
    p.add_argument("--model", type=Path, help="mixture model JSON; knockoffs are sampled when --knockoffs is absent")
    p.add_argument("--method", default="swap-integral", help=f"one of {', '.join(METHODS)}")
    p.add_argument("--q", type=_q_value, default=0.1)
    p.add_argument("--offset", type=int, choices=(0, 1), default=1)
    p.add_argument("--predictor", choices=("mlp", "logistic"), default="mlp")
    p.add_argument("--layers", type=_layers, default=(64, 64, 64))
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--family", choices=("gaussian", "binomial"), default="binomial", help="lasso family for lcd")
    p.add_argument("--grid", type=_parse_grid, default=DEFAULT_GRID, help="lambda grid, e.g. 0:10:0.25")
    p.add_argument("--stats-out", type=Path, help="W table CSV")
    p.add_argument("--report", type=Path, help="selection report CSV")

    p = sub.add_parser("experiment", help="run a synthetic experiment")
    _add_common(p)
    p.add_argument("--preset", help=f"one of {', '.join(PRESETS)}")
    p.add_argument("--experiment", type=Path, help="experiment config JSON (see print-config)")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--q", type=_q_value, action="append", help="target FDR (repeatable)")
    p.add_argument("--out-dir", type=Path, default=Path("."))

    p = sub.add_parser("print-config", help="print default settings as JSON")
    p.add_argument("what", nargs="?", default="experiment",
                   help="experiment, stat, a preset name, or a subcommand name")
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults taken from ``--config`` when given."""
    args = parser.parse_args(argv)
    cfg_path = getattr(args, "config", None)
    if cfg_path is None:
        return args
    cfg = read_json(cfg_path)
    if not isinstance(cfg, dict):
        raise InputError(f"{cfg_path}: config must be a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in dests or dest in ("config", "help"):
            raise InputError(f"{cfg_path}: unknown option {key!r} for {args.command}")
        action = dests[dest]
        if action.type is not None and not isinstance(value, (list, dict, bool)) and value is not None:
            try:
                value = action.type(str(value))
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise InputError(f"{cfg_path}: option {key!r}: {exc}") from None
        defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _require(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise _Fail(f"--{n.replace('_', '-')} is required")


def _say(text=""):
    print(text, flush=True)


def cmd_fit_model(args) -> int:
    _require(args, "data", "out")
    X, columns, _ = read_csv(args.data, args.label)
    cfg = gmm.EmConfig(max_iters=args.max_iters, tol=args.tol, n_restarts=args.restarts, seed=args.seed)
    if args.k is not None:
        if args.k < 1 or args.k > X.shape[0]:
            raise _Fail(f"--k must lie in [1, {X.shape[0]}]")
        model = gmm.fit_em(X, args.k, cfg)
        _say(f"k\tAIC\n{args.k}\t{gmm.aic(model, X):.6f}")
    else:
        ks = [k for k in args.k_range if 1 <= k <= X.shape[0]]
        if not ks:
            raise _Fail("--k-range has no feasible value")
        model, chosen, table = gmm.select_k_aic(X, ks, cfg, return_table=True)
        _say("k\tAIC")
        for k, a in table.items():
            _say(f"{k}\t{a:.6f}")
    save_model(args.out, model, columns)
    _say(f"chosen k = {model.num_components}")
    return 0


def _match_columns(model_cols, columns, what):
    if model_cols is not None and list(model_cols) != list(columns):
        raise _Fail(f"{what} columns {model_cols} do not match data columns {columns}")


def _sample_knockoffs(X, columns, model_path, net_path, seed):
    rng = np.random.default_rng(seed)
    if net_path is not None:
        net = load_net(net_path)
        if net.observed_width() != X.shape[1]:
            raise _Fail(f"network has {net.observed_width()} observed columns but the data has {X.shape[1]}")
        return sample_bn_knockoffs(net, X, rng)
    model, model_cols = load_model(model_path)
    if model.dim != X.shape[1]:
        raise _Fail(f"model dimension {model.dim} does not match {X.shape[1]} data columns")
    _match_columns(model_cols, columns, "model")
    return sample_mixture_knockoffs(MixtureKnockoffSampler(model), X, rng)


def cmd_knockoffs(args) -> int:
    _require(args, "data", "out")
    if args.model is None and args.net is None:
        raise _Fail("one of --model or --net is required")
    X, columns, _ = read_csv(args.data, args.label)
    Xk = _sample_knockoffs(X, columns, args.model, args.net, args.seed)
    write_csv(args.out, Xk, [f"{c}_knockoff" for c in columns])
    _say(f"wrote {Xk.shape[0]} x {Xk.shape[1]} knockoffs to {args.out}")
    return 0


def cmd_select(args) -> int:
    _require(args, "data")
    if args.method not in METHODS:
        raise _Fail(f"unknown method {args.method!r}; choose from {', '.join(METHODS)}")
    if args.knockoffs is None and args.model is None:
        raise _Fail("one of --knockoffs or --model is required")
    X, columns, y = read_csv(args.data, args.label)
    if args.knockoffs is not None:
        Xk, _, _ = read_csv(args.knockoffs)
        if Xk.shape != X.shape:
            raise _Fail(f"knockoffs have shape {Xk.shape}, data features have shape {X.shape}")
    else:
        Xk = _sample_knockoffs(X, columns, args.model, None, args.seed)
    if (args.method == "lcd" and args.family == "binomial") or args.method == "logistic":
        if not np.all(np.isin(y, (0, 1))):
            raise _Fail("binary 0/1 labels are required for this method; use --family gaussian for lcd")
    if args.predictor == "logistic" and not np.all(np.isin(y, (0, 1))):
        raise _Fail("the logistic predictor needs 0/1 labels")
    grid = tuple(args.grid)
    if not grid or grid[0] != 0.0 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise _Fail("--grid must start at 0 and increase")
    cfg = StatConfig(predictor=args.predictor, layers=tuple(args.layers), epochs=args.epochs, lr=args.lr,
                     family=args.family, grid=grid, seed=args.seed)
    sv = compute_statistics(X, Xk, y, [args.method], cfg)[args.method]
    sel = select(sv.w, args.q, args.offset)
    d = X.shape[1]
    z = sv.z if sv.z is not None else np.full(2 * d, np.nan)
    chosen = set(sel.selected)
    if args.stats_out is not None:
        rows = [{"feature": columns[j], "Z": z[j], "Z_knockoff": z[d + j], "W": sv.w[j], "method": args.method,
                 "seed": args.seed} for j in range(d)]
        write_table(args.stats_out, rows, ("feature", "Z", "Z_knockoff", "W", "method", "seed"))
    if args.report is not None:
        rows = [{"feature": columns[j], "W": sv.w[j], "selected": j in chosen, "threshold": sel.threshold,
                 "q": args.q, "offset": args.offset} for j in range(d)]
        write_table(args.report, rows, ("feature", "W", "selected", "threshold", "q", "offset"))
    _say(f"selected {sel.size} of {d} features (threshold {sel.threshold:g}, q = {args.q}, offset {args.offset})")
    for j in sel.selected:
        _say(f"  {columns[j]}\tW = {sv.w[j]:.6g}")
    return 0


def _experiment_config(args) -> ExperimentConfig:
    if (args.preset is None) == (args.experiment is None):
        raise _Fail("give exactly one of --preset or --experiment")
    try:
        if args.preset is not None:
            if args.preset not in PRESETS:
                raise _Fail(f"unknown preset {args.preset!r}; choose from {', '.join(PRESETS)}")
            cfg = preset(args.preset, seed=args.seed)
        else:
            data = read_json(args.experiment)
            data.setdefault("seed", args.seed)
            cfg = ExperimentConfig.from_dict(data)
        overrides = cfg.to_dict()
        if args.repetitions is not None:
            overrides["repetitions"] = args.repetitions
        if args.q:
            overrides["q"] = list(args.q)
        return ExperimentConfig.from_dict(overrides)
    except (TypeError, ValueError) as exc:
        raise _Fail(f"invalid experiment config: {exc}") from None


def cmd_experiment(args) -> int:
    cfg = _experiment_config(args)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    res = run_experiment(cfg)
    write_table(out / "repetitions.csv", res.rows, ROW_FIELDS)
    summary = res.summary()
    write_table(out / "summary.csv", summary, SUMMARY_FIELDS)
    write_json(out / "summary.json", {"config": res.config, "summary": summary, "failures": res.failures})
    sweep = next(iter(cfg.sweep), "sweep")
    _say(f"{sweep}\tmodel\tmethod\tq\tfdr\tfdr_se\tpower\tmean_k")
    for s in summary:
        _say(f"{s['sweep_value']}\t{s['model']}\t{s['method']}\t{s['q']}\t{s['fdr']:.4f}\t{s['fdr_se']:.4f}"
             f"\t{s['power']:.4f}\t{s['mean_k']:.2f}")
    if res.failures:
        _say(f"{len(res.failures)} repetition(s) failed and were excluded")
    return 0


def cmd_print_config(args, parser) -> int:
    what = args.what
    if what == "experiment":
        data = ExperimentConfig().to_dict()
    elif what == "stat":
        data = asdict(StatConfig())
    elif what in PRESETS:
        data = preset(what).to_dict()
    else:
        choices = parser._subparsers._group_actions[0].choices
        if what not in choices or what == "print-config":
            raise _Fail(f"unknown config {what!r}; choose experiment, stat, a preset ({', '.join(PRESETS)}) "
                        "or a subcommand")
        data = {}
        for a in choices[what]._actions:
            if a.dest in ("help", "config") or a.default is argparse.SUPPRESS:
                continue
            v = a.default
            data[a.dest.replace("_", "-")] = str(v) if isinstance(v, Path) else (list(v) if isinstance(v, tuple) else v)
    _say(json.dumps(data, indent=2))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.command == "print-config":
            return cmd_print_config(args, parser)
        handler = {"fit-model": cmd_fit_model, "knockoffs": cmd_knockoffs, "select": cmd_select,
                   "experiment": cmd_experiment}[args.command]
        return handler(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level guard maps to exit code 1
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
