"""Freeze generator output for seed=1, L=2, R=1, d=2 as PFT1 files.

Only rerun this if the generator is intentionally changed; the test suite
compares fresh output against these bytes.
"""

import argparse
from pathlib import Path

from parflow import pft
from parflow.bench import generate_inputs

SEED, L, R, D = 1, 2, 1, 2


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dir", default=str(Path(__file__).resolve().parents[1] / "tests" / "data"))
    args = ap.parse_args()
    out = Path(args.dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs, S0 = generate_inputs(SEED, L, R, D)
    for name, arr in (("A", inputs.A), ("A_tilde", inputs.A_tilde), ("B", inputs.B), ("S0", S0)):
        path = out / f"golden_seed{SEED}_L{L}_R{R}_d{D}_{name}.pft"
        pft.write(path, arr)
        print(path)


if __name__ == "__main__":
    main()
