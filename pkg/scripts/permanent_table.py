#!/usr/bin/env python3
"""Exact accuracy defects of the permanent estimators over Gaussian matrices.

Also reports Monte-Carlo 1- and self-accuracy of the multiplicative
estimate over uniform 0-1 matrices, which has no closed form here.
"""

import argparse

from multiacc import accuracy as ac
from multiacc import permanent as pe

ESTIMATORS = ("e_row", "e_col", "e_ms", "e_ms_prime", "e_row_col", "e_row_col_ms")
PREDICTORS = ("1", "e_row", "e_col", "e_ms", "self")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--samples", type=int, default=10**5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    for n in args.n:
        M = pe.PermanentMoments(n)
        Y = pe.permanent_predictor("perm", n)
        print(f"\nn = {n}   (defect E[(perm - f) X], exact)")
        print("f".ljust(14) + "".join(p.rjust(12) for p in PREDICTORS))
        for name in ESTIMATORS:
            f = pe.permanent_predictor(name, n)
            cells = []
            for p in PREDICTORS:
                X = f if p == "self" else pe.permanent_predictor(p, n)
                cells.append(f"{round(ac.check_accuracy(f, X, Y, M).defect, 10) + 0.0:12.5f}")
            print(name.ljust(14) + "".join(cells))
        for den in ("ms", "us"):
            if n > pe.US_BRUTE_MAX_N and den == "us":
                continue
            one, self_ = pe.multiplicative_self_accuracy(n, den, args.samples, args.seed)
            print(f"multiplicative/{den}: 1-defect {one.defect:+.5f} ± {one.std_error:.5f}, "
                  f"self-defect {self_.defect:+.5f} ± {self_.std_error:.5f}  (0-1 matrices, MC)")


if __name__ == "__main__":
    main()
