#!/usr/bin/env python3
"""RMSE-versus-cost frontier on the call-level target sweep [90, 110],
comparing single-, two- and multi-level estimators."""
import argparse

from mlsa.harness import ExperimentConfig, run_experiment


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", default="64,256",
                        help="comma separated bias grid (powers of m for ml)")
    parser.add_argument("--targets", type=int, default=200)
    parser.add_argument("--methods", default="sa,sr,ml")
    parser.add_argument("--m", type=int, default=4)
    parser.add_argument("--seed", type=int, default=3)
    parser.add_argument("--out", default="results/frontier")
    args = parser.parse_args()

    config = ExperimentConfig(
        experiment="frontier",
        problem="call-level",
        n_grid=tuple(int(t) for t in args.n.split(",")),
        reps_N=args.targets,
        method=args.methods,
        m=args.m,
        gamma0=2.0,
        exponent_a=1.0,
        seed=args.seed,
        out_dir=args.out,
    )
    points = run_experiment(config)
    for p in points:
        print(f"{p.method:5s} n={p.n:4d} rmse={p.rmse:8.4f} "
              f"cost={p.measured_cost:.3e} ({p.wall_seconds:.1f}s)")


if __name__ == "__main__":
    main()
