"""Command-line entry point ``alignkin``.

Exit codes: 0 ok, 2 tolerance breach, 3 configuration error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

from ..errors import AbsorbingState, ConfigurationError, DomainError, NumericalError
from ..series import RunSeries
from .acceptance import run_all
from .compare import convergence_order
from .config import MODEL_ALIASES, ExperimentConfig, config_from_dict, load_config, read_toml
from .experiments import compare_runs, run_experiment, run_sweep
from .io import emit, to_csv_text

EXIT_OK = 0
EXIT_TOLERANCE = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4

KINETIC_CHOICES = ("reference", "first-order", "limit", "scalar")


def _eps_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--eps expects numbers separated by commas, got {text!r}")
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("--eps values must be positive")
    return vals


def _window(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"--window expects LO,HI, got {text!r}")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment TOML file")
    common.add_argument("--out", type=Path, help="output directory (default: print to stdout)")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--eps", type=_eps_list, help="epsilon value(s), comma separated")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    p = argparse.ArgumentParser(prog="alignkin", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate-particles", parents=[common], help="stochastic particle simulation")
    sub.add_parser("solve-moments", parents=[common], help="integrate a moment system")
    k = sub.add_parser("solve-kinetic", parents=[common], help="solve a kinetic model")
    k.add_argument("--model", choices=KINETIC_CHOICES, help="override the configured model")
    c = sub.add_parser("compare", parents=[common], help="L1 / bounded-Lipschitz distance of two runs")
    c.add_argument("--against", required=True,
                   help="model name or second TOML file to compare the configured run with")
    c.add_argument("--window", type=_window, help="time window LO,HI")
    s = sub.add_parser("sweep", parents=[common], help="run an epsilon ladder")
    s.add_argument("--against", help="reference model; adds errors and the order fit")
    s.add_argument("--window", type=_window, help="time window LO,HI for the error")
    chk = sub.add_parser("check", help="run the acceptance suite")
    chk.add_argument("--only", help="comma-separated criterion numbers")
    return p


def _load(args, model: str | None = None) -> ExperimentConfig:
    if args.config is None:
        raise ConfigurationError("--config is required for this command")
    data = read_toml(args.config)
    if model is not None:
        data["model"] = model
    if args.seed is not None:
        data.setdefault("run", {})["seed"] = args.seed
    if args.eps is not None:
        rates = data.setdefault("rates", {})
        if args.command == "sweep":
            data.setdefault("sweep", {})["epsilon"] = args.eps
            rates.setdefault("epsilon", args.eps[0])
        elif len(args.eps) != 1:
            raise ConfigurationError("--eps takes a single value for this command")
        else:
            rates["epsilon"] = args.eps[0]
    return config_from_dict(data)


def _write(series: RunSeries, args, stem: str) -> None:
    if args.out is None:
        if args.format == "csv":
            sys.stdout.write(to_csv_text(series))
        else:
            sys.stdout.write(json.dumps({"meta": series.meta, "rows": series.rows}, default=str) + "\n")
        return
    args.out.mkdir(parents=True, exist_ok=True)
    emit(series, args.format, args.out / f"{stem}.{args.format}")


def _single(args, expected: tuple[str, ...], model: str | None = None) -> int:
    cfg = _load(args, model)
    if cfg.model not in expected:
        raise ConfigurationError(f"{args.command} needs model in {expected}, config has '{cfg.model}'")
    res = run_experiment(cfg, args.out, args.format)
    if args.out is None:
        _write(res.series, args, cfg.model)
    for name, d in res.drift.items():
        if not d["ok"]:
            print(f"tolerance breach: {name} drift {d['drift']:.3e} > {d['tol']:.3e}", file=sys.stderr)
    return EXIT_OK if res.ok else EXIT_TOLERANCE


def _other_config(args, cfg: ExperimentConfig) -> ExperimentConfig:
    if args.against.lower() in MODEL_ALIASES:
        data = copy.deepcopy(cfg.resolved)
        data["model"] = args.against
        return config_from_dict(data)
    return load_config(args.against)


def _compare(args) -> int:
    cfg = _load(args)
    res_a = run_experiment(cfg)
    res_b = run_experiment(_other_config(args, cfg))
    comp = compare_runs(res_a, res_b, args.window)
    series = RunSeries(rows=comp.table, meta={"command": "compare", "a": cfg.model,
                                              "b": res_b.config.model, "window": args.window,
                                              "sup_l1": comp.sup_l1, "sup_bl_f2": comp.sup_bl_f2,
                                              "config_hash": cfg.digest()})
    _write(series, args, f"compare_{cfg.model}_{res_b.config.model}")
    return EXIT_OK if res_a.ok and res_b.ok else EXIT_TOLERANCE


def _sweep(args) -> int:
    cfg = _load(args)
    eps = args.eps if args.eps is not None else cfg.sweep
    results = run_sweep(cfg, eps, args.out, args.format)
    rows = []
    ok = True
    for res in results:
        row = {"epsilon": res.config.epsilon}
        for name, d in res.drift.items():
            row[f"{name}_drift"] = d["drift"]
        ok = ok and res.ok
        if args.against:
            data = copy.deepcopy(res.config.resolved)
            data["model"] = args.against
            ref = run_experiment(config_from_dict(data))
            row["error"] = compare_runs(res, ref, args.window).sup_l1
        rows.append(row)
    meta = {"command": "sweep", "model": cfg.model, "against": args.against, "config_hash": cfg.digest()}
    if args.against and len(rows) >= 3:
        slope, r2 = convergence_order([(r["epsilon"], r["error"]) for r in rows])
        meta.update(slope=slope, r2=r2)
    _write(RunSeries(rows=rows, meta=meta), args, f"sweep_{cfg.model}")
    return EXIT_OK if ok else EXIT_TOLERANCE


def _check(args) -> int:
    only = None
    if args.only:
        try:
            only = [int(x) for x in args.only.split(",")]
        except ValueError:
            raise ConfigurationError(f"--only expects criterion numbers, got {args.only!r}") from None
    results = run_all(only)
    return EXIT_OK if all(r.passed for r in results) else EXIT_TOLERANCE


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate-particles":
            return _single(args, ("particle",), "particle")
        if args.command == "solve-moments":
            return _single(args, ("moments",), "moments")
        if args.command == "solve-kinetic":
            return _single(args, KINETIC_CHOICES, args.model)
        if args.command == "compare":
            return _compare(args)
        if args.command == "sweep":
            return _sweep(args)
        return _check(args)
    except (ConfigurationError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, AbsorbingState) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
