#!/usr/bin/env python3
"""Print the FLOP table for given subarray count, nonlinearity order and memory depth."""

import argparse

from hybrid_dpd import complexity as cx


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--subarrays", type=int, default=2)
    ap.add_argument("--order", type=int, default=11)
    ap.add_argument("--memory", type=int, default=3)
    args = ap.parse_args()
    p = cx.ComplexityParams.from_dpd(args.subarrays, args.order, args.memory)
    print(cx.table_csv(cx.table_rows(L=p.L, N_IBF=p.N_IBF, N_BF=p.N_BF)), end="")


if __name__ == "__main__":
    main()
