#!/usr/bin/env python3
"""Recompute Friedman statistics from reported average ranks (N problems, k algorithms)."""

import argparse

from rdex_csop.stats import friedman_from_average_ranks

DEFAULT = {
    "final Q": (2.29, 2.39, 2.84, 2.48),
    "TTT": (1.61, 2.14, 2.89, 3.36),
    "final objective": (2.11, 2.46, 2.66, 2.77),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=28, help="number of problems")
    ap.add_argument("--ranks", nargs="+", type=float, help="average ranks; defaults to the stored tables")
    args = ap.parse_args()
    table = {"custom": tuple(args.ranks)} if args.ranks else DEFAULT
    for label, ranks in table.items():
        chi2, df, p = friedman_from_average_ranks(ranks, args.n)
        print(f"{label:<16} chi2={chi2:8.3f}  df={df}  p={p:.3e}")


if __name__ == "__main__":
    main()
