#!/usr/bin/env python3
"""Weak-error curves for the quantile problem (desk-scale version of the
n = 100..500 study): n * h^n(theta*) and n * (theta^{*,n} - theta*)."""
import argparse

from mlsa.harness import ExperimentConfig, run_experiment


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", default="16,32,64,128",
                        help="comma separated bias grid")
    parser.add_argument("--reps", type=int, default=16,
                        help="independent recursions averaged per n")
    parser.add_argument("--steps", type=int, default=1_000_000)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--out", default="results/weak-error")
    args = parser.parse_args()

    config = ExperimentConfig(
        experiment="weak-error",
        problem="quantile",
        n_grid=tuple(int(t) for t in args.n.split(",")),
        reps_N=args.reps,
        gamma0=200.0,
        exponent_a=1.0,
        seed=args.seed,
        out_dir=args.out,
        weak_steps=args.steps,
    )
    rows = run_experiment(config)
    for r in rows:
        print(f"n={r.n:4d}  n*h^n(theta*) = {r.nh:+.4f} +- {r.se_h:.4f}   "
              f"n*(theta^(*,n) - theta*) = {r.ntheta:+.3f} +- {r.se_theta:.3f}")


if __name__ == "__main__":
    main()
