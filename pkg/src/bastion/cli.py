"""Command-line interface.

Commands
--------
decompose   Bayesian decomposition of a CSV series.
identify    Identifiability report for a set of penalty operators.
map         Penalized (posterior-mode) decomposition for fixed penalty weights.
study       Simulation study over the synthetic generators.

Every command reads an optional JSON file given by ``--config``; command-line
flags override its values. Exit codes: 0 success, 2 configuration error,
3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import io
from .exceptions import BastionError, ConfigError, DataError, NumericError

log = logging.getLogger("bastion")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _seed_default():
    value = os.environ.get("BASTION_SEED")
    if value is None or value.strip() == "":
        return None
    try:
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"BASTION_SEED must be an integer, got {value!r}") from exc


# ---------------------------------------------------------------------------
# argument parsing


def _common(parser):
    parser.add_argument("--config", help="JSON file with settings (flags take precedence)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")


def _series_args(parser):
    parser.add_argument("--input", help="CSV file with the series")
    parser.add_argument("--column", help="value column (name or zero-based index; default last)")
    parser.add_argument("--time-column", dest="time_column",
                        help="time label column (default first when there are several)")
    parser.add_argument("--periods", help="comma-separated seasonal periods, e.g. 12,40")


def _penalty_args(parser):
    parser.add_argument("--trend-ops", dest="trend_ops",
                        help="comma-separated trend operator kinds (default second_difference)")
    parser.add_argument("--seasonal-ops", dest="seasonal_ops",
                        help="comma-separated operator kinds applied to every seasonal")
    parser.add_argument("--constraint", choices=["none", "center", "pin_first"],
                        help="constraint applied to every seasonal")
    parser.add_argument("--full-windows", dest="full_windows", action="store_true", default=None,
                        help="seasonal recurrence with every complete window")
    parser.add_argument("--truncated-windows", dest="full_windows", action="store_false",
                        help="seasonal recurrence without its last window")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bastion", description="Bayesian trend and multi-seasonality decomposition")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="posterior decomposition of a series")
    _common(p)
    _series_args(p)
    p.add_argument("--no-outliers", dest="include_outliers", action="store_false", default=None)
    p.add_argument("--no-sv", dest="include_sv", action="store_false", default=None)
    p.add_argument("--burn", type=int)
    p.add_argument("--save", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--level", type=float, help="interval probability (default 0.95)")
    p.add_argument("--emit-draws", dest="emit_draws", action="store_true", default=None,
                   help="also write draws.bin")

    p = sub.add_parser("identify", help="identifiability report")
    _common(p)
    p.add_argument("--n", type=int, help="series length")
    p.add_argument("--periods")
    _penalty_args(p)

    p = sub.add_parser("map", help="penalized decomposition")
    _common(p)
    _series_args(p)
    _penalty_args(p)
    p.add_argument("--lambda", dest="lambdas", type=float, help="one weight for every penalty")
    p.add_argument("--allow-nonunique", dest="allow_nonunique", action="store_true", default=None)

    p = sub.add_parser("study", help="simulation study")
    _common(p)
    p.add_argument("--dgp", help="comma-separated generator ids (1-4)")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--burn", type=int)
    p.add_argument("--save", type=int)
    p.add_argument("--level", type=float)
    p.add_argument("--components", choices=("matched", "base"),
                   help="fit volatility/outlier blocks per generator (matched) or from the "
                        "model settings (base)")
    return parser


def _merge(config, args, keys):
    """Overlay non-None flag values onto the config dict."""
    out = dict(config)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    return out


def _load(args):
    return io.load_json(args.config) if args.config else {}


def _out_dir(path, default):
    out = Path(path if path else default)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# penalty configuration shared by identify and map


def _op_list(value, default):
    if value is None:
        return list(default)
    if isinstance(value, str):
        return [v for v in value.replace(" ", "").split(",") if v]
    return list(value)


def penalties_from_config(cfg, n):
    """Build :class:`~bastion.identifiability.ComponentPenalties` from a settings dict.

    Keys: ``periods``, ``trend_ops`` (kinds, default ``second_difference``),
    ``seasonal_ops`` (kinds for every seasonal, or one list per seasonal;
    default ``seasonal_difference``), ``constraint`` or ``constraints``, and
    ``full_windows`` for the recurrence operator.
    """
    from .identifiability import ComponentPenalties
    from .operators import OperatorKind, make_operator

    periods = io.parse_periods(cfg.get("periods"))
    if not periods:
        raise ConfigError("at least one seasonal period is required")
    full = cfg.get("full_windows")
    kwargs = {} if full is None else {"full_windows": bool(full)}

    def make(kind, k=None):
        try:
            kind = OperatorKind(kind)
        except ValueError as exc:
            names = ", ".join(o.value for o in OperatorKind)
            raise ConfigError(f"unknown operator kind {kind!r}; choose from {names}") from exc
        extra = kwargs if kind is OperatorKind.SEASONAL_RECURRENCE else {}
        return make_operator(kind, n, k, **extra)

    trend = [make(kind) for kind in _op_list(cfg.get("trend_ops"), ["second_difference"])]
    seasonal_cfg = cfg.get("seasonal_ops")
    if isinstance(seasonal_cfg, list) and seasonal_cfg and isinstance(seasonal_cfg[0], list):
        if len(seasonal_cfg) != len(periods):
            raise ConfigError("seasonal_ops needs one operator list per period")
        per = seasonal_cfg
    else:
        per = [_op_list(seasonal_cfg, ["seasonal_difference"])] * len(periods)
    seasonal = [[make(kind, k) for kind in kinds] for kinds, k in zip(per, periods)]

    constraints = cfg.get("constraints")
    if constraints is None:
        single = cfg.get("constraint")
        single = None if single in (None, "none") else single
        constraints = [single] * len(periods)
    return ComponentPenalties(trend, seasonal, constraints), periods, per


# ---------------------------------------------------------------------------
# commands


def cmd_decompose(args):
    from .gaussian_sampler import BACKEND
    from .gibbs import run_decomposition, summarize

    cfg = _merge(_load(args), args, ["input", "column", "time_column", "periods",
                                     "include_outliers", "include_sv", "burn", "save", "thin",
                                     "seed", "level", "out", "emit_draws"])
    if "seed" not in cfg:
        env_seed = _seed_default()
        if env_seed is not None:
            cfg["seed"] = env_seed
    config = io.RunConfig.from_dict(cfg)
    if not config.input:
        raise ConfigError("decompose needs --input")
    y, times = io.read_series(config.input, config.column, config.time_column, config.periods)
    spec = config.model_spec(y.size)
    out = _out_dir(config.out, "bastion_out")

    progress = None
    if args.verbose:
        step = max(1, spec.n_sweeps // 20)

        def progress(i, total):
            if i % step == 0:
                log.info("sweep %d / %d", i, total)

    draws = run_decomposition(y, spec, progress=progress)
    summary = summarize(draws, level=config.level)
    io.write_components(out / "components.csv", summary, y, times, spec.periods)
    io.write_plotdata(out / "plotdata", summary, y, times, spec.periods)
    if config.emit_draws:
        io.write_draws(out / "draws.bin", draws)
    io.dump_json(io.summary_document(draws, summary, config, BACKEND), out / "summary.json")
    print(f"wrote {out / 'components.csv'}")
    return EXIT_OK


def cmd_identify(args):
    from .identifiability import (
        check_identifiability,
        nullity_formula_differencing,
        nullity_formula_recurrence,
    )

    cfg = _merge(_load(args), args, ["n", "periods", "trend_ops", "seasonal_ops", "constraint",
                                     "full_windows", "out"])
    periods = io.parse_periods(cfg.get("periods"))
    n = cfg.get("n")
    if n is None:
        n = sum(periods) + 12 if periods else None
    if n is None:
        raise ConfigError("identify needs --periods (and optionally --n)")
    p, periods, per = penalties_from_config(cfg, int(n))
    report = check_identifiability(p)
    doc = report.to_dict()
    doc.update(n=int(n), periods=list(periods))

    # closed form, when every seasonal uses one and the same classical operator
    kinds = {tuple(k) for k in per}
    trend_kinds = _op_list(cfg.get("trend_ops"), ["second_difference"])
    formula = None
    if (len(periods) >= 2 and len(kinds) == 1 and trend_kinds == ["second_difference"]
            and all(c is None for c in p.constraints)):
        (only,) = kinds
        if only == ("seasonal_difference",):
            formula = nullity_formula_differencing(periods)
        elif only == ("seasonal_recurrence",):
            formula = nullity_formula_recurrence(periods, full_windows=cfg.get("full_windows", True))
    doc["formula_nullity"] = formula

    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if cfg.get("out"):
        out = _out_dir(cfg["out"], "")
        (out / "identify.json").write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_map(args):
    from .map_solver import solve_map

    cfg = _merge(_load(args), args, ["input", "column", "time_column", "periods", "trend_ops",
                                     "seasonal_ops", "constraint", "full_windows", "lambdas",
                                     "allow_nonunique", "out"])
    if not cfg.get("input"):
        raise ConfigError("map needs --input")
    y, times = io.read_series(cfg["input"], cfg.get("column"), cfg.get("time_column"),
                              cfg.get("periods"))
    p, periods, _ = penalties_from_config(cfg, y.size)
    sol = solve_map(y, p, cfg.get("lambdas", 1.0),
                    allow_nonunique=bool(cfg.get("allow_nonunique", False)))
    out = _out_dir(cfg.get("out"), "bastion_map")
    header = ["time", "trend"] + [f"seasonal{k}" for k in periods] + ["fitted", "residual"]
    cols = [times, sol.trend] + list(sol.seasonals) + [y - sol.residual, sol.residual]
    io.write_csv(out / "map_components.csv", header, [[v if isinstance(v, str) else float(v)
                                                       for v in c] for c in cols])
    io.dump_json({"objective": sol.objective, "unique": sol.unique, "method": sol.method,
                  "nullity": sol.nullity, "jitter": sol.jitter, "periods": list(periods),
                  "n": int(y.size)}, out / "map_summary.json")
    print(f"wrote {out / 'map_components.csv'}")
    return EXIT_OK


def cmd_study(args):
    from .simulation import default_base_spec, run_study

    cfg = _merge(_load(args), args, ["dgp", "reps", "seed", "jobs", "burn", "save", "level", "out",
                                        "components"])
    if "seed" not in cfg:
        env_seed = _seed_default()
        cfg["seed"] = 0 if env_seed is None else env_seed
    dgps = cfg.get("dgp", "1,2,3,4")
    dgps = [int(d) for d in (dgps.split(",") if isinstance(dgps, str) else dgps)]
    overrides = {}
    if cfg.get("burn") is not None:
        overrides["n_burn"] = int(cfg["burn"])
    if cfg.get("save") is not None:
        overrides["n_save"] = int(cfg["save"])
    overrides.update(cfg.get("model", {}))
    base = default_base_spec(**overrides)

    def progress(row):
        log.info("dgp %d rep %d: signal mse %.4f", row.dgp, row.rep, row.mse_signal)

    result = run_study(dgps, int(cfg.get("reps", 10)), base=base, seed=int(cfg["seed"]),
                       jobs=int(cfg.get("jobs", 1)), level=float(cfg.get("level", 0.95)),
                       progress=progress if args.verbose else None,
                       components=cfg.get("components", "matched"))
    out = result.write(_out_dir(cfg.get("out"), "bastion_study"))
    print(f"wrote study tables to {out}")
    return EXIT_OK


COMMANDS = {"decompose": cmd_decompose, "identify": cmd_identify, "map": cmd_map,
            "study": cmd_study}


def main(argv=None):
    """Entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BastionError as exc:  # pragma: no cover - every subclass is handled above
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
