"""Command line entry point.

    mlsa <experiment> --problem quantile|call-level --n 16,32,64
         --reps 100 --method sa --m 4 --beta auto --gamma0 200 --a 1.0
         --seed 123 --warm-start on --freeze on --out results/

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
Worker count is capped by the MLSA_THREADS environment variable.
"""
from __future__ import annotations

import argparse
import sys

from .errors import ConfigurationError, NumericalAbort
from .harness import EXPERIMENTS, ExperimentConfig, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected on or off, got {value!r}")
    return value == "on"


def _int_list(value: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in value.split(",") if tok.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"expected a comma separated list of integers, got {value!r}"
        ) from exc


def _beta(value: str):
    if value == "auto":
        return "auto"
    try:
        return float(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"expected a real number or 'auto', got {value!r}"
        ) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlsa",
        description="Benchmark experiments for multi-level stochastic "
                    "approximation estimators.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--problem", choices=("quantile", "call-level"),
                        default="quantile")
    parser.add_argument("--n", type=_int_list, default=(16, 32, 64),
                        metavar="N1,N2,...", help="bias parameter grid")
    parser.add_argument("--reps", type=int, default=100,
                        help="replications (frontier: number of targets)")
    parser.add_argument("--method", default="sa",
                        help="sa|sa-rp|sr|sr-rp|ml; comma separated list "
                             "allowed for the frontier experiment")
    parser.add_argument("--m", type=int, default=4, help="multi-level base")
    parser.add_argument("--beta", type=_beta, default="auto",
                        help="two-level exponent or 'auto' for 1/(1+2 rho)")
    parser.add_argument("--gamma0", type=float, default=200.0)
    parser.add_argument("--a", type=float, default=1.0, dest="exponent_a",
                        help="step decay exponent in (1/2, 1]")
    parser.add_argument("--seed", type=int, default=20240901)
    parser.add_argument("--warm-start", type=_on_off, default=True,
                        metavar="on|off")
    parser.add_argument("--freeze", type=_on_off, default=True,
                        metavar="on|off")
    parser.add_argument("--out", default="out", help="output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = ExperimentConfig(
            experiment=args.experiment,
            problem=args.problem,
            n_grid=args.n,
            reps_N=args.reps,
            method=args.method,
            m=args.m,
            gamma0=args.gamma0,
            exponent_a=args.exponent_a,
            beta=args.beta,
            seed=args.seed,
            out_dir=args.out,
            warm_start=args.warm_start,
            freeze=args.freeze,
        )
        run_experiment(config)
    except (ConfigurationError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
