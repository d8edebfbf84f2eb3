"""Command-line entry point: ``icc-cta run|calibrate|tabulate|list-scenarios``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

import numpy as np

from ..detect import ThresholdCache, calibrate_thresholds, false_alarm_rate
from ..errors import ConfigError, IccCtaError, NumericalError
from .config import ENV_OUT_DIR, SCENARIOS, build_config
from .io import write_metadata, write_results
from .scenarios import REGISTRY, ScenarioFailure, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("icc_cta")


def _resolve_out(path: Optional[str], scenario: str) -> str:
    base = os.environ.get(ENV_OUT_DIR)
    if path is None:
        return os.path.join(base or ".", f"{scenario}.csv")
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icc-cta", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="verb", required=True)

    def scenario_args(p, choices):
        p.add_argument("--scenario", required=True, choices=choices)
        p.add_argument("--config", help="INI file with a [scenario] section")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
        p.add_argument("--out", help=f"CSV path (default <scenario>.csv under ${ENV_OUT_DIR} or .)")
        p.add_argument("--seed", type=_u64, help="unsigned 64-bit master seed")
        p.add_argument("--workers", type=int, help="worker processes (default 1)")
        p.add_argument("--format", choices=("csv", "dat"), default="csv")
        p.add_argument("--no-plot", action="store_true", help="skip the figure next to the CSV")

    scenario_args(sub.add_parser("run", help="run a Monte Carlo scenario"), SCENARIOS)
    analytic = [name for name, sc in REGISTRY.items() if sc.analytic]
    scenario_args(sub.add_parser("tabulate", help="emit an analytic table"), analytic)

    cal = sub.add_parser("calibrate", help="calibrate ERD thresholds and store them in the cache")
    cal.add_argument("--n-t", type=int, required=True)
    cal.add_argument("--target-pf", type=float, default=5e-4)
    cal.add_argument("--snr-db", type=float, default=20.0)
    cal.add_argument("--trials", type=int)
    cal.add_argument("--validate", type=int, default=0, help="fresh noise-only blocks for a P_f check")
    cal.add_argument("--seed", type=_u64, default=0)
    cal.add_argument("--cache", help="threshold cache file (default erd_thresholds.json in the output dir)")

    sub.add_parser("list-scenarios", help="print scenario names and descriptions")
    return parser


def _cmd_run(args) -> int:
    cfg = build_config(args.scenario, args.config, args.overrides, args.seed, args.workers)
    out = _resolve_out(args.out, cfg.scenario)
    out_dir = os.path.dirname(os.path.abspath(out))
    sc = REGISTRY[cfg.scenario]
    status = EXIT_OK
    try:
        rows = run_scenario(cfg, out_dir)
    except ScenarioFailure as exc:
        log.error("%s", exc)
        rows, status = exc.rows, EXIT_NUMERICAL
    write_results(rows, out, sc.columns, args.format)
    stem = os.path.splitext(out)[0]
    write_metadata(stem + ".meta.json", cfg.as_items(),
                   {"scenario": cfg.scenario, "columns": list(sc.columns), "desk_scale_defaults": True,
                    "complete": status == EXIT_OK})
    if not args.no_plot:
        from ..plotting import render

        render(cfg.scenario, rows, stem + ".png")
    print(f"{cfg.scenario}: {len(rows)} records -> {out}")
    return status


def _cmd_calibrate(args) -> int:
    if args.n_t < 3:
        raise ConfigError("--n-t must be at least 3")
    if not 0.0 < args.target_pf < 0.5:
        raise ConfigError("--target-pf must lie in (0, 0.5)")
    trials = args.trials or int(np.ceil(20.0 / args.target_pf))
    if trials < 10.0 / args.target_pf:
        raise ConfigError(f"--trials must be at least {int(np.ceil(10.0 / args.target_pf))}")
    cache = ThresholdCache(args.cache or os.path.join(os.environ.get(ENV_OUT_DIR, "."), "erd_thresholds.json"))
    thr = cache.get(args.n_t, args.target_pf, args.snr_db, args.seed)
    if thr is None:
        rng = np.random.default_rng([args.seed, args.n_t, 0xE4D])
        thr = calibrate_thresholds(args.n_t, args.target_pf, trials, rng, args.snr_db, args.seed)
        cache.put(thr)
    print(f"n_t={thr.n_t} target_pf={thr.target_pf} gamma_presence={thr.gamma_presence!r} "
          f"gamma_dual={thr.gamma_dual!r}")
    if args.validate:
        pf = false_alarm_rate(thr, args.validate, np.random.default_rng([args.seed, args.n_t, 0x7A1]))
        print(f"validation P_f={pf!r} over {args.validate} blocks")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.verb in ("run", "tabulate"):
            return _cmd_run(args)
        if args.verb == "calibrate":
            return _cmd_calibrate(args)
        for name, sc in REGISTRY.items():
            print(f"{name:16s} {sc.description}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (IccCtaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
