#!/usr/bin/env python3
"""Quick look at the two signaling schemes: exact error curves and the
compile budgets they imply.

    python scripts/explore_signaling.py --p 0.1 --T 64 --eta 0.01
"""

import argparse

import numpy as np

from covertlab.signaling import (beta_for_p, bhattacharyya_rate,
                                 compiled_budget, exact_majority_error,
                                 majority_n_for, optimal_error_batch)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--p", type=float, default=0.1)
    parser.add_argument("--T", type=int, default=64)
    parser.add_argument("--eta", type=float, default=0.01)
    parser.add_argument("--trials", type=int, default=50_000)
    args = parser.parse_args()

    beta = beta_for_p(args.p)
    lam = bhattacharyya_rate(args.p)
    print(f"p = {args.p}: beta = {beta:.4f}, lambda = {lam:.6f}")
    print("\nmajority scheme, exact error:")
    for n in (11, 51, 101, 401, 1601):
        print(f"  n = {n:5d}: {exact_majority_error(n, beta):.5f}")
    print("\noptimal scheme, bound vs Monte Carlo:")
    rng = np.random.default_rng(0)
    for n in (10, 20, 40):
        err = optimal_error_batch(n, args.p, args.trials, rng) / args.trials
        print(f"  n = {n:3d}: observed {err:.5f}  bound {0.5 * lam ** n:.5f}")
    n_bit, total = compiled_budget(args.p, args.T, args.eta)
    print(f"\ncompiling T = {args.T} bits at eta = {args.eta}: "
          f"n_per_bit = {n_bit}, total uses = {total}")
    if args.p <= 0.01:
        n_maj = majority_n_for(args.p, 1.0 / (100 * args.T))
        print(f"majority compile at union budget 1/100: n_per_bit = {n_maj}")
    else:
        print("majority compile: pick p <= 0.01 to keep n_per_bit tractable")


if __name__ == "__main__":
    main()
