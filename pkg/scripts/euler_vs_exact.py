"""Gap between the Euler (recurrence) flow and the exact exponential flow.

Scales every increment A_k B_k^T by eps = 2^-n and reports the Frobenius gap
between the two products; the gap should shrink like eps^2.
"""

import argparse

import numpy as np

from parflow.bench import generate_inputs
from parflow.expflow import Increment, flow_product


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--L", type=int, default=16)
    ap.add_argument("--R", type=int, default=2)
    ap.add_argument("--d", type=int, default=6)
    ap.add_argument("--nmax", type=int, default=8)
    args = ap.parse_args()

    inputs, _ = generate_inputs(args.seed, args.L, args.R, args.d)
    eps, gaps = [], []
    print("n,eps,gap")
    for n in range(2, args.nmax + 1):
        e = 2.0**-n
        incs = [Increment(e * a.T, b.T) for a, b in zip(inputs.A, inputs.B)]
        gap = np.linalg.norm(flow_product(incs, "exact") - flow_product(incs, "euler"))
        eps.append(e)
        gaps.append(gap)
        print(f"{n},{e:.6g},{gap:.6e}")
    slope = np.polyfit(np.log(eps), np.log(gaps), 1)[0]
    print(f"# log-log slope {slope:.3f}")


if __name__ == "__main__":
    main()
