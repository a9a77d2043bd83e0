#!/usr/bin/env python3
"""Mean steps to absorption versus |ln eps| for both walkers.

Reproduces the step-count comparison on the unit disk from (0.5, 0):
sweeps eps = 1e-2 .. 1e-8, fits a + b |ln eps| per method, and writes
plot-ready CSVs.
"""

import argparse

from exitwalk.harness import ExperimentConfig, step_scaling_experiment, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10**5, help="trajectories per epsilon")
    ap.add_argument("--seed", type=int, default=4242)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out-prefix", type=str, default="steps")
    args = ap.parse_args()

    eps_list = [10.0**-k for k in range(2, 9)]
    base = ExperimentConfig(
        method="woms",
        x0=(0.5, 0.0),
        epsilon=1e-5,
        trajectories=args.n,
        seed=args.seed,
        workers=args.workers,
    )
    for method, label in (("woms", "woms"), ("wos_position", "wos")):
        sweep = step_scaling_experiment(method, base, eps_list)
        fit = sweep.fit
        print(
            f"{label}: mean_steps = {fit.intercept:+.3f} + {fit.slope:.3f} |ln eps| "
            f"(r^2 = {fit.r_squared:.5f})"
        )
        write_csv(
            f"{args.out_prefix}_{label}.csv",
            ["eps", "abs_ln_eps", "mean_steps", "ci95"],
            [(r["eps"], r["abs_ln_eps"], r["mean_steps"], r["ci95"]) for r in sweep.rows],
        )


if __name__ == "__main__":
    main()
