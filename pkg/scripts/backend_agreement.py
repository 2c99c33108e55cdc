"""Relative error of every backend against the sequential recurrence.

Runs a grid of sizes and chunk lengths and also prints the final state norm,
which shows where the inputs stop being contractive (try --scale 1).
"""

import argparse
import itertools

import numpy as np

from parflow import recurrence
from parflow.bench import BACKENDS, generate_inputs, run_backend
from parflow.tensor import rel_frobenius


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--Ls", default="1,7,32,128")
    ap.add_argument("--Rs", default="1,4")
    ap.add_argument("--ds", default="2,16")
    ap.add_argument("--chunks", default="1,7,0", help="0 means a single chunk")
    ap.add_argument("--scale", type=float, default=0.5)
    args = ap.parse_args()

    ints = lambda s: [int(x) for x in s.split(",")]  # noqa: E731
    print("backend,L,R,d,chunk_len,rel_err,state_norm")
    worst = 0.0
    for L, R, d in itertools.product(ints(args.Ls), ints(args.Rs), ints(args.ds)):
        inputs, S0 = generate_inputs(args.seed, L, R, d, args.scale)
        ref = recurrence.run(S0, inputs)
        for backend, c in itertools.product(BACKENDS, ints(args.chunks)):
            chunk_len = c or None
            err = rel_frobenius(run_backend(backend, S0, inputs, chunk_len), ref)
            worst = max(worst, err)
            print(f"{backend},{L},{R},{d},{chunk_len or L},{err:.3e},{np.linalg.norm(ref):.3e}")
    print(f"# worst relative error {worst:.3e}")


if __name__ == "__main__":
    main()
