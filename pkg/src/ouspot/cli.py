"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical precondition
(parameter domain, drift divergence, infeasible contract, degenerate basis,
unoptimised benchmark build), 4 validation failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .errors import (
    BasisDegeneracyError,
    BuildProfileError,
    ConfigError,
    FeasibilityError,
    ParameterDomainError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VALIDATION = 4

WORKERS_ENV = "OUSPOT_WORKERS"


def _common(p: argparse.ArgumentParser, config_default: str | None = "case1") -> None:
    p.add_argument("--config", default=config_default,
                   help="YAML run file or preset name (case1, case2, case3)")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--n-paths", type=int, help="number of simulated paths")
    p.add_argument("--sampler", choices=["jumptime", "polya", "randomrate", "euler"])
    p.add_argument("--workers", type=int, help=f"worker threads (default: ${WORKERS_ENV} or all)")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--allow-biased", action="store_true", default=None,
                   help="permit the biased Euler scheme")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ouspot", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate spot paths and write them as CSV")
    _common(p)
    p.add_argument("--factors", action="store_true", help="also write the X/Y1/Y2 factor paths")

    for name, what in (("price-asian", "arithmetic Asian call"),
                       ("price-storage", "gas storage (LSMC)"),
                       ("price-swing", "swing option (LSMC)")):
        p = sub.add_parser(name, help=f"price a {what}")
        _common(p)

    p = sub.add_parser("bench", help="time the samplers and report ratios to polya")
    _common(p)
    p.add_argument("--ladder", default="10000,100000", help="comma-separated n_paths ladder")
    p.add_argument("--reps", type=int, default=3, help="timed repetitions (>= 3)")
    p.add_argument("--steps", type=int, default=365, help="time steps per simulated path")
    p.add_argument("--lsmc-paths", type=int, default=0, help="also time LSMC storage at this size")
    p.add_argument("--force", action="store_true", help="time even a JIT-disabled build")

    p = sub.add_parser("validate", help="run the statistical oracle suite")
    _common(p, config_default=None)
    p.add_argument("--martingale-paths", type=int, default=None)
    return parser


def _load(args):
    from .config import load_config

    cfg = load_config(args.config)
    cfg = cfg.with_overrides(seed=args.seed, n_paths=args.n_paths, sampler=args.sampler,
                             workers=args.workers, allow_biased=args.allow_biased)
    return cfg


def _workers(args, cfg) -> int:
    from .market import set_workers

    workers = args.workers if args.workers is not None else (cfg.simulation.workers if cfg else None)
    if workers is None and os.environ.get(WORKERS_ENV):
        try:
            workers = int(os.environ[WORKERS_ENV])
        except ValueError:
            raise ConfigError(f"expected an integer, got {os.environ[WORKERS_ENV]!r}", WORKERS_ENV) from None
    return set_workers(workers)


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(report, args, cfg) -> None:
    path = _out_dir(args, cfg) / cfg.output.report_csv
    path.write_text(report.to_csv())
    print(report.summary())
    print(f"report written to {path}")


def cmd_simulate(args) -> int:
    from .market import simulate_paths

    cfg = _load(args)
    _workers(args, cfg)
    sim = cfg.simulation
    batch = simulate_paths(cfg.model, sim.grid(), sim.n_paths, sim.seed, retain_factors=args.factors)
    path = _out_dir(args, cfg) / cfg.output.paths_csv
    batch.to_csv(path, factors=args.factors)
    last = batch.spot[:, -1]
    se = last.std(ddof=1) / np.sqrt(last.size) if last.size > 1 else 0.0
    print(f"simulated {batch.n_paths} paths x {batch.times.size} dates "
          f"(sampler={sim.sampler.value}, seed={sim.seed})")
    print(f"terminal spot mean {last.mean():.6f} (SE {se:.6f}), forward {cfg.model.forward(batch.times[-1]):.6f}")
    print(f"paths written to {path}")
    return EXIT_OK


def cmd_price(args) -> int:
    from .pricing import AsianSpec, StorageSpec, SwingSpec, price_asian, price_storage, price_swing

    cfg = _load(args)
    _workers(args, cfg)
    product = args.command.removeprefix("price-")
    kind = {"asian": AsianSpec, "storage": StorageSpec, "swing": SwingSpec}[product]
    spec = cfg.contract if isinstance(cfg.contract, kind) else None
    if product == "asian":
        spec = spec or AsianSpec(strike=float(cfg.model.forward(0.0)))
        report = price_asian(cfg.model, spec, cfg.simulation.n_paths, cfg.simulation.seed)
    elif product == "storage":
        report = price_storage(cfg.model, spec, cfg.lsmc_config())
    else:
        report = price_swing(cfg.model, spec, cfg.lsmc_config())
    _write_report(report, args, cfg)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import run_bench

    cfg = _load(args)
    _workers(args, cfg)
    try:
        ladder = [int(x) for x in args.ladder.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {args.ladder!r}", "--ladder") from None
    samplers = ["jumptime", "polya", "randomrate"]
    if args.sampler == "euler":
        samplers.append("euler")
    report = run_bench(cfg.model, ladder=ladder, samplers=samplers, steps=args.steps,
                       reps=args.reps, lsmc_paths=args.lsmc_paths or None, force=args.force)
    path = _out_dir(args, cfg) / "bench.csv"
    path.write_text(report.to_csv())
    print(report.summary())
    print(f"benchmark written to {path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .config import PRESETS, load_config
    from .validation import format_results, run_suite

    if args.config:
        cfg = _load(args)
        models = {Path(str(args.config)).stem: cfg.model}
    else:
        cfg = None
        models = {p: load_config(p).model for p in PRESETS}
    _workers(args, cfg)
    n = args.n_paths or 100_000
    results = run_suite(models, n=n, n_martingale=args.martingale_paths or n,
                        seed=args.seed if args.seed is not None else 12345)
    print(format_results(results))
    failed = any(not r.passed and not r.informational for r in results)
    return EXIT_VALIDATION if failed else EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "price-asian": cmd_price,
    "price-storage": cmd_price,
    "price-swing": cmd_price,
    "bench": cmd_bench,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParameterDomainError, FeasibilityError, BasisDegeneracyError, BuildProfileError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
