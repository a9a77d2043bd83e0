#!/usr/bin/env python3
"""Wall-clock comparison of the three exit-time methods.

Builds a 10^6-sample tau_1 table, then times wos-table / woms /
wos-inversion across eps = 1e-2 .. 1e-8 on the unit disk from (0.5, 0)
and fits seconds = a + b |ln eps| per method.  Absolute seconds are
hardware-specific; the ordering and the affine shape are the portable
observations.
"""

import argparse
import tempfile
from pathlib import Path

from exitwalk.harness import ExperimentConfig, timing_experiment, write_csv
from exitwalk.samplers import RngStream
from exitwalk.walkers import precompute_table, write_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=2 * 10**5, help="trajectories per point")
    ap.add_argument("--table-size", type=int, default=10**6)
    ap.add_argument("--seed", type=int, default=777)
    ap.add_argument("--out", type=str, default="timing.csv")
    args = ap.parse_args()

    table = precompute_table(args.table_size, 2, "inversion", RngStream(args.seed, 0))
    table_path = Path(tempfile.mkdtemp()) / "tau1.bin"
    write_table(table, table_path)

    base = ExperimentConfig(
        method="woms",
        x0=(0.5, 0.0),
        epsilon=1e-5,
        trajectories=args.n,
        seed=args.seed,
        workers=1,
        table_path=str(table_path),
    )
    eps_list = [10.0**-k for k in range(2, 9)]
    rows, fits = timing_experiment(
        ["wos_table", "woms", "wos_inversion"], base, eps_list, table=table
    )
    for method, fit in fits.items():
        print(
            f"{method}: seconds = {fit.intercept:+.3f} + {fit.slope:.3f} |ln eps| "
            f"(r^2 = {fit.r_squared:.4f})"
        )
    write_csv(
        args.out,
        ["method", "eps", "abs_ln_eps", "seconds"],
        [(r["method"], r["eps"], r["abs_ln_eps"], r["seconds"]) for r in rows],
    )
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
