"""Multiply-add counts and peak live scalars per backend over a sweep in L.

Prints one CSV row per (backend, L) plus the fitted log-log slope of the
madd count in L for each backend.
"""

import argparse

import numpy as np

from parflow.bench import BACKENDS, BenchConfig, bench, format_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--Ls", default="64,128,256,512")
    ap.add_argument("--R", type=int, default=2)
    ap.add_argument("--d", type=int, default=4)
    ap.add_argument("--backend", action="append", choices=BACKENDS)
    ap.add_argument("--chunk-len", type=int, default=None)
    args = ap.parse_args()

    Ls = [int(x) for x in args.Ls.split(",")]
    cfg = BenchConfig(R=args.R, d=args.d, sweep=Ls, chunk_len=args.chunk_len,
                      backends=args.backend or ["tensorinv", "sigdelta"])
    rows = bench(cfg)
    print(format_report(rows, "csv", "bench", cfg, None), end="")
    for backend in cfg.backends:
        sel = [r for r in rows if r["backend"] == backend and r["L"] > 0]
        if len(sel) < 2:
            continue
        x = np.log([r["L"] for r in sel])
        slope = np.polyfit(x, np.log([r["madds"] for r in sel]), 1)[0]
        mem = np.polyfit(x, np.log([r["peak_scalars"] for r in sel]), 1)[0]
        print(f"# {backend}: madd slope {slope:.3f}, peak-memory slope {mem:.3f}")


if __name__ == "__main__":
    main()
