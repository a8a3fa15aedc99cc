#!/usr/bin/env python3
"""Median best-so-far curves per problem from a trace directory, as a CSV table.

Prints ``problem,checkpoint,median_f,feasible_share`` rows; pipe into any
plotting tool.
"""

import argparse
import sys

import numpy as np

from rdex_csop import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("trace_dir")
    ap.add_argument("--every", type=int, default=50, help="emit every n-th checkpoint")
    args = ap.parse_args()
    out = sys.stdout
    out.write("problem,checkpoint,median_f,feasible_share\n")
    for problem, group in harness.group_by_problem(harness.read_trace_dir(args.trace_dir)).items():
        f = np.array([t.best_f for t in group])
        cv = np.array([t.best_cv for t in group])
        for c in range(args.every - 1, f.shape[1], args.every):
            out.write(f"{problem},{c + 1},{float(np.median(f[:, c]))!r},{float(np.mean(cv[:, c] == 0))!r}\n")


if __name__ == "__main__":
    main()
