#!/usr/bin/env python3
"""Monte Carlo oracle for the curved-boundary hitting density.

Estimates the density of the first passage time of psi(t) = 1 + t^2/4 at
t = 1 by direct path simulation with Brownian-bridge crossing correction
(the bridge term removes the O(sqrt(h)) discrete-monitoring bias, so a
step of 1e-3 is enough).  Used once to freeze the expected value asserted
in tests/test_brownian1d.py; rerun to regenerate.
"""

import argparse
import math

import numpy as np


def run(paths: int, h: float, t_eval: float, half_window: float, seed: int, chunk: int):
    psi = lambda t: 1.0 + 0.25 * t * t
    t_end = t_eval + half_window
    n_steps = int(math.ceil(t_end / h))
    lo, hi = t_eval - half_window, t_eval + half_window
    rng = np.random.default_rng(seed)
    hits_in_window = 0
    sqrt_h = math.sqrt(h)
    done_paths = 0
    while done_paths < paths:
        n = min(chunk, paths - done_paths)
        done_paths += n
        b = np.zeros(n)
        alive = np.arange(n)
        d_prev = np.full(n, psi(0.0))
        for i in range(n_steps):
            t_next = (i + 1) * h
            g = rng.standard_normal(alive.size)
            b_next = b[alive] + sqrt_h * g
            d_next = psi(t_next) - b_next
            crossed = d_next <= 0.0
            # Brownian bridge: crossing probability of the chord between
            # the two endpoints within the step.
            inside = ~crossed
            p_bridge = np.exp(-2.0 * d_prev[alive][inside] * d_next[inside] / h)
            bridge_hit = rng.random(inside.sum()) < p_bridge
            hit = crossed.copy()
            hit[np.nonzero(inside)[0][bridge_hit]] = True
            t_hit = t_next - 0.5 * h
            if lo <= t_hit <= hi:
                hits_in_window += int(hit.sum())
            b[alive] = b_next
            d_prev[alive] = d_next
            alive = alive[~hit]
            if alive.size == 0:
                break
    density = hits_in_window / (paths * 2.0 * half_window)
    se = math.sqrt(hits_in_window) / (paths * 2.0 * half_window)
    return density, se, hits_in_window


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=8_000_000)
    ap.add_argument("--h", type=float, default=1e-3)
    ap.add_argument("--t", type=float, default=1.0)
    ap.add_argument("--window", type=float, default=0.01, help="half width of the density window")
    ap.add_argument("--seed", type=int, default=20240901)
    ap.add_argument("--chunk", type=int, default=2_000_000)
    args = ap.parse_args()
    density, se, hits = run(args.paths, args.h, args.t, args.window, args.seed, args.chunk)
    print(f"paths={args.paths} h={args.h} window=+-{args.window}")
    print(f"density at t={args.t}: {density:.6f} +- {se:.6f} (1 se, {hits} hits)")


if __name__ == "__main__":
    main()
