"""Command line interface.

Exit codes: 0 on success, 2 on invalid input or configuration, 1 on
numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from friedrichs_mor.exceptions import (
    CapExceeded,
    ConfigError,
    EmptyBasis,
    NegativeDefinite,
    NonConformingResolution,
    NonPositiveMargin,
    SpaceMismatch,
)
from friedrichs_mor.harness import (
    caccioppoli_check,
    load_config,
    oversampling_study,
    parse_length,
    run_experiment,
    run_oracle,
)

logger = logging.getLogger("friedrichs_mor")

_VALIDATION_ERRORS = (ConfigError, NonConformingResolution, NonPositiveMargin, NegativeDefinite,
                      CapExceeded, SpaceMismatch, EmptyBasis)


def _parse_deltas(text: str):
    """``"0.25:1/40,0.5,1"`` -> deltas and per-delta mesh width overrides."""
    deltas, overrides = [], {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        delta, _, h = item.partition(":")
        d = parse_length(delta)
        deltas.append(d)
        if h:
            overrides[d] = parse_length(h)
    if not deltas:
        raise ConfigError("no deltas given")
    return deltas, overrides


def _config(args):
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, out_dir=args.out_dir, max_basis=args.max_basis)


def cmd_train(args) -> int:
    result = run_experiment(_config(args), evaluate=False)
    print(f"basis size {result.basis_size} "
          f"({'cap reached' if result.approximation.reached_max_basis else 'tolerance met'}); "
          f"wrote {', '.join(str(p) for p in result.artifacts.values())}")
    return 0


def cmd_evaluate(args) -> int:
    result = run_experiment(_config(args), evaluate=True)
    if result.errors is not None:
        median = np.median(result.errors.total, axis=0)
        print(f"basis size {result.basis_size}; median relative error at N={result.basis_size}: {median[-1]:.3e}")
    else:
        print(f"basis size {result.basis_size}; no evaluation samples requested")
    for path in result.artifacts.values():
        print(f"  {path}")
    return 0


def cmd_oracle(args) -> int:
    approx, paths = run_oracle(_config(args))
    print(f"{approx.sigmas.size} singular values, sigma_1 = {approx.sigmas[0]:.6e}")
    for path in paths.values():
        print(f"  {path}")
    return 0


def cmd_study(args) -> int:
    cfg = _config(args)
    deltas, overrides = _parse_deltas(args.deltas)
    seeds = None
    if args.seeds is not None:
        base_seed = cfg.training.seed
        seeds = range(base_seed, base_seed + args.seeds)
    path = Path(cfg.out_dir) / f"{cfg.prefix or cfg.test_case}_oversampling_study.csv"
    rows = oversampling_study(cfg, deltas, seeds=seeds, h_overrides=overrides, workers=args.workers, path=path)
    for row in rows:
        print(f"delta={row['delta']:g} h={row['h']:.6g} N={row['basis_size']:g} sizes={row['basis_sizes']}")
    print(f"  {path}")
    return 0


def cmd_caccioppoli(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg.file_prefix}_caccioppoli.csv"
    pairs = caccioppoli_check(cfg, args.samples, path=path)
    ratios = [lhs / rhs for lhs, rhs in pairs]
    print(f"{len(pairs)} samples; max lhs/rhs = {max(ratios):.4e}; holds for all: {all(r <= 1 for r in ratios)}")
    print(f"  {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="friedrichs-mor", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="YAML experiment configuration")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out-dir", default=None)
    common.add_argument("--max-basis", type=int, default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train", parents=[common], help="run the adaptive range finder").set_defaults(func=cmd_train)
    sub.add_parser("evaluate", parents=[common],
                   help="train, then write projection errors and oracle singular values").set_defaults(func=cmd_evaluate)
    sub.add_parser("oracle", parents=[common], help="singular values of the transfer operator").set_defaults(
        func=cmd_oracle)
    study = sub.add_parser("study-oversampling", parents=[common], help="basis size versus oversampling margin")
    study.add_argument("--deltas", required=True, help="comma separated, optionally delta:h, e.g. 0.25:1/40,0.5,1")
    study.add_argument("--seeds", type=int, default=None, help="number of consecutive seeds (median reported)")
    study.add_argument("--workers", type=int, default=1)
    study.set_defaults(func=cmd_study)
    cacc = sub.add_parser("check-caccioppoli", parents=[common], help="evaluate both sides of the decay estimate")
    cacc.add_argument("--samples", type=int, default=20)
    cacc.set_defaults(func=cmd_caccioppoli)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 1
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
