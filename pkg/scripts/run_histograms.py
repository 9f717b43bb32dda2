#!/usr/bin/env python3
"""Error histograms n (Theta - theta*) for the single-, two- and
multi-level estimators on the call-level problem (n = 256, N = 1000)."""
import argparse

from mlsa.harness import ExperimentConfig, run_experiment


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=256)
    parser.add_argument("--reps", type=int, default=1000)
    parser.add_argument("--methods", default="sa,sr,ml")
    parser.add_argument("--seed", type=int, default=2)
    parser.add_argument("--out", default="results/histograms")
    args = parser.parse_args()

    for method in args.methods.split(","):
        config = ExperimentConfig(
            experiment="histogram",
            problem="call-level",
            n_grid=(args.n,),
            reps_N=args.reps,
            method=method,
            m=4,
            gamma0=2.0,
            exponent_a=1.0,
            seed=args.seed,
            out_dir=f"{args.out}/{method}",
        )
        run_experiment(config)


if __name__ == "__main__":
    main()
