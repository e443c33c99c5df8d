"""Command-line entry point: ``jointshrink {estimate,simulate,backtest,version}``.

Settings resolve as: command-line flag > ``JOINTSHRINK_<FLAG>`` environment
variable > config file (``key = value`` lines) > built-in default.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .backtest import DEFAULT_COST_BPS, BacktestConfig, run_backtest
from .baselines import NodewiseConfig
from .core import normalize_tag, read_rate_csv, read_returns_csv, subtract_rate
from .registry import ESTIMATORS, PLACEHOLDERS, fit_estimator
from .simulation import DgpSpec, run_study
from .space import SpaceConfig

logger = logging.getLogger("jointshrink")

ENV_PREFIX = "JOINTSHRINK_"
BACKTEST_ESTIMATORS = "space-unweighted,space-weighted,nodewise,ledoit-wolf"


class UsageError(Exception):
    pass


def read_config(path_or_name: str) -> dict[str, str]:
    """Parse a flat ``key = value`` file; bundled names resolve to package configs."""
    path = Path(path_or_name)
    if path.exists():
        text = path.read_text()
    else:
        res = resources.files("jointshrink") / "configs" / f"{path_or_name}.cfg"
        if not res.is_file():
            raise UsageError(f"config {path_or_name!r} not found")
        text = res.read_text()
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path_or_name}: line {lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def resolve(args: argparse.Namespace, key: str, file_cfg: dict, default, cast=str):
    val = getattr(args, key, None)
    if val is not None:
        return cast(val)
    env = os.environ.get(ENV_PREFIX + key.upper())
    if env is not None:
        return cast(env)
    if key in file_cfg:
        return cast(file_cfg[key])
    return default


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {v!r}")


def _lam(v):
    return "auto" if str(v).strip().lower() == "auto" else float(v)


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(path: Path, command: str, config: dict, seed, inputs, started: str) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "inputs": {str(p): _digest(p) for p in inputs},
        "started": started,
        "finished": _now(),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _space_config(args, file_cfg) -> SpaceConfig:
    return SpaceConfig(
        lam=resolve(args, "lam", file_cfg, "auto", _lam),
        outer_iterations=resolve(args, "outer_iterations", file_cfg, 3, int),
        coord_tolerance=resolve(args, "coord_tolerance", file_cfg, 1e-6, float),
        max_sweeps=resolve(args, "max_sweeps", file_cfg, 1000, int),
        lambda_grid_size=resolve(args, "grid_size", file_cfg, 30, int),
        standardize=resolve(args, "standardize", file_cfg, True, _bool),
    )


def _nodewise_config(args, file_cfg) -> NodewiseConfig:
    lam = resolve(args, "lam", file_cfg, "auto", _lam)
    return NodewiseConfig(lam=None if lam == "auto" else lam,
                          grid_size=max(2, resolve(args, "grid_size", file_cfg, 30, int)),
                          standardize=resolve(args, "standardize", file_cfg, True, _bool))


def _as_config_dict(cfg) -> dict:
    return {k: v for k, v in cfg.__dict__.items()}


def _tag(name: str) -> str:
    tag = normalize_tag(name)
    if tag not in ESTIMATORS and tag not in PLACEHOLDERS:
        raise UsageError(f"unknown estimator {name!r}")
    return tag


def cmd_estimate(args) -> int:
    started = _now()
    file_cfg = read_config(args.config) if args.config else {}
    x = read_returns_csv(args.input)
    tag = _tag(resolve(args, "estimator", file_cfg, "space-unweighted"))
    if tag in PLACEHOLDERS or tag == "exact":
        raise UsageError(f"estimator {tag!r} cannot be fitted from data")
    space, nodewise = _space_config(args, file_cfg), _nodewise_config(args, file_cfg)
    est = fit_estimator(tag, x, space=space, nodewise=nodewise)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    if "fit" in est.extra:
        doc = est.extra["fit"].to_json(list(x.asset_labels))
        out.write_text(json.dumps(doc, indent=2) + "\n")
        config = {"estimator": tag, **_as_config_dict(space)}
    else:
        with out.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["asset", *x.asset_labels])
            for label, row in zip(x.asset_labels, est.precision.values):
                w.writerow([label, *(repr(float(v)) for v in row)])
        config = {"estimator": tag}
        if tag == "nodewise":
            config.update(_as_config_dict(nodewise))
    write_manifest(out.with_name(out.name + ".manifest.json"), "estimate", config,
                   None, [args.input], started)
    return 0


def _parse_grid(text: str) -> list[tuple[int, int]]:
    grid = []
    for cell in text.split(","):
        cell = cell.strip()
        if not cell:
            continue
        try:
            n, p = cell.lower().split("x")
            grid.append((int(n), int(p)))
        except ValueError:
            raise UsageError(f"bad grid cell {cell!r}; expected NxP") from None
    return grid


def cmd_simulate(args) -> int:
    started = _now()
    file_cfg = read_config(args.config) if args.config else {}
    dgp = resolve(args, "dgp", file_cfg, "toeplitz")
    grid = _parse_grid(resolve(args, "grid", file_cfg, "100x50"))
    estimators = [_tag(e) for e in resolve(args, "estimators", file_cfg,
                                              "space-unweighted,nodewise,ledoit-wolf").split(",")]
    portfolios = resolve(args, "portfolios", file_cfg, "gmv").split(",")
    R = resolve(args, "replications", file_cfg, 100, int)
    seed = resolve(args, "seed", file_cfg, 0, int)
    jobs = resolve(args, "jobs", file_cfg, os.cpu_count() or 1, int)
    mmu = resolve(args, "markowitz_mu", file_cfg, "sample")
    space = _space_config(args, file_cfg)
    try:
        specs = [DgpSpec(dgp, n, p) for n, p in grid]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    table = run_study(specs, estimators, portfolios, R, seed, markowitz_mu=mmu, space=space,
                      jobs=jobs)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "study.csv")
    (out / "study.json").write_text(json.dumps(table.to_json(), indent=2) + "\n")
    (out / "study.txt").write_text(table.pivot() + "\n")
    config = {"dgp": dgp, "grid": [f"{n}x{p}" for n, p in grid], "estimators": estimators,
              "portfolios": portfolios, "replications": R, "markowitz_mu": mmu,
              "space": _as_config_dict(space), "config_file": args.config}
    inputs = [args.config] if args.config and Path(args.config).exists() else []
    write_manifest(out / "manifest.json", "simulate", config, seed, inputs, started)
    if not args.quiet:
        print(table.pivot())
    return 0


def cmd_backtest(args) -> int:
    started = _now()
    file_cfg = read_config(args.config) if args.config else {}
    if args.input:
        input_path = Path(args.input)
    else:
        input_path = Path(str(resources.files("jointshrink") / "data" / "synthetic_monthly.csv"))
    x = read_returns_csv(input_path)
    inputs = [input_path]
    rf = resolve(args, "risk_free", file_cfg, None)
    if rf:
        x = subtract_rate(x, read_rate_csv(rf))
        inputs.append(Path(rf))
    portfolio = resolve(args, "portfolio", file_cfg, "gmv")
    frequency = resolve(args, "frequency", file_cfg, "monthly")
    target = resolve(args, "target", file_cfg, None, float)
    n_t = resolve(args, "train_length", file_cfg, min(60, x.shape[0] // 2), int)
    estimators = [_tag(e) for e in resolve(args, "estimators", file_cfg, BACKTEST_ESTIMATORS).split(",")]
    jobs = resolve(args, "jobs", file_cfg, os.cpu_count() or 1, int)
    base = dict(
        train_length=n_t,
        portfolio=portfolio,
        target=target,
        frequency=frequency,
        cost_bps=resolve(args, "cost_bps", file_cfg, DEFAULT_COST_BPS, float),
        space=_space_config(args, file_cfg),
        nodewise=_nodewise_config(args, file_cfg),
        rebalance_every=resolve(args, "rebalance_every", file_cfg, 1, int),
        charge_initial_trade=resolve(args, "charge_initial_trade", file_cfg, False, _bool),
    )
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    resolved = None
    for tag in estimators:
        if tag in PLACEHOLDERS or tag == "exact":
            raise UsageError(f"estimator {tag!r} cannot be backtested from data")
        cfg = BacktestConfig(estimator=tag, **base)
        resolved = cfg
        report = run_backtest(x, cfg, jobs=jobs)
        (out / f"report_{tag}.json").write_text(json.dumps(report.to_json(), indent=2) + "\n")
        report.write_periods_csv(out / f"periods_{tag}.csv")
        summary.extend(report.summary_rows())
    cols = ["estimator", "portfolio", "block", "return", "variance", "sharpe", "turnover"]
    with (out / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in summary:
            w.writerow(["" if row[c] is None else (repr(row[c]) if isinstance(row[c], float) else row[c])
                        for c in cols])
    config = {
        "estimators": estimators,
        "train_length": n_t,
        "portfolio": portfolio,
        "frequency": frequency,
        "target": resolved.mu_star if portfolio == "markowitz" else None,
        "cost_bps": resolved.cost_bps,
        "rebalance_every": resolved.rebalance_every,
        "charge_initial_trade": resolved.charge_initial_trade,
        "space": _as_config_dict(resolved.space),
        "nodewise": _as_config_dict(resolved.nodewise),
        "risk_free": rf,
    }
    write_manifest(out / "manifest.json", "backtest", config, None, inputs, started)
    if not args.quiet:
        for row in summary:
            print(f"{row['estimator']:<18}{row['portfolio']:<10}{row['block']:<14}"
                  f"{row['return']:>12.6g}{row['variance']:>12.6g}{row['sharpe']:>10.4f}"
                  + (f"{row['turnover']:>10.4f}" if row["turnover"] is not None else ""))
    return 0


def cmd_version(args) -> int:
    print(f"jointshrink {__version__}")
    return 0


def _add_estimator_flags(p):
    p.add_argument("--lambda", dest="lam", help="penalty or 'auto' (default auto)")
    p.add_argument("--outer-iterations", type=int)
    p.add_argument("--coord-tolerance", type=float)
    p.add_argument("--max-sweeps", type=int)
    p.add_argument("--grid-size", type=int, help="lambda grid size for auto tuning")
    p.add_argument("--standardize", choices=["true", "false"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jointshrink", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="fit a precision estimator to a returns CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--estimator", help="space-unweighted | space-weighted | nodewise | ledoit-wolf")
    p.add_argument("--output", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, help="accepted for uniformity; fits are deterministic")
    _add_estimator_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="run a Monte-Carlo study")
    p.add_argument("--config", help="config file or bundled name, e.g. tables_toeplitz_gmv")
    p.add_argument("--replications", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--dgp", choices=["toeplitz", "sparse_factor"])
    p.add_argument("--grid", help="comma list of NxP cells")
    p.add_argument("--estimators")
    p.add_argument("--portfolios")
    p.add_argument("--markowitz-mu", choices=["sample", "true"])
    p.add_argument("--jobs", type=int)
    p.add_argument("--quiet", action="store_true")
    _add_estimator_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("backtest", help="rolling-sample backtest on a returns CSV")
    p.add_argument("--input", help="returns CSV (default: bundled synthetic monthly fixture)")
    p.add_argument("--config")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--estimators")
    p.add_argument("--train-length", type=int)
    p.add_argument("--portfolio", choices=["gmv", "markowitz"])
    p.add_argument("--frequency", choices=["monthly", "daily"])
    p.add_argument("--target", type=float, help="per-period Markowitz target return")
    p.add_argument("--cost-bps", type=float, help="proportional cost in basis points (default 50)")
    p.add_argument("--rebalance-every", type=int)
    p.add_argument("--charge-initial-trade", choices=["true", "false"])
    p.add_argument("--risk-free", help="CSV of date,rate subtracted from every asset")
    p.add_argument("--seed", type=int, help="accepted for uniformity; backtests are deterministic")
    p.add_argument("--jobs", type=int)
    p.add_argument("--quiet", action="store_true")
    _add_estimator_flags(p)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("version", help="print the version")
    p.set_defaults(func=cmd_version)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ValueError, RuntimeError, OSError) as exc:
        print(f"jointshrink {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
