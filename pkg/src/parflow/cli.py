"""``parflow verify|bench|run``.

Exit codes: 0 success, 1 tolerance breach, 2 configuration error,
3 input error (missing or malformed PFT1 file, inconsistent shapes).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from parflow import bench as bench_mod
from parflow.bench import BACKENDS, BenchConfig, ConfigError
from parflow.pft import PFTError
from parflow.tensor import ShapeError

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_INPUT = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: config error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config; flags override its keys")
    common.add_argument("--seed", type=int)
    common.add_argument("--L", type=int)
    common.add_argument("--R", type=int)
    common.add_argument("--d", type=int)
    common.add_argument("--chunk-len", dest="chunk_len", type=int)
    common.add_argument("--backend", dest="backends", action="append", choices=BACKENDS)
    common.add_argument("--repeats", type=int)
    common.add_argument("--scale", type=float)
    common.add_argument("--tolerance", type=float)
    common.add_argument("--sweep", type=_int_list, help="comma-separated L values (bench)")
    common.add_argument("--out", help="output path (default: stdout for reports)")
    common.add_argument("--format", choices=("csv", "json"))

    parser = _Parser(prog="parflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("verify", parents=[common], help="check backends against the sequential oracle")
    sub.add_parser("bench", parents=[common], help="time and count multiply-adds per backend")
    run = sub.add_parser("run", parents=[common], help="write the final state as PFT1")
    run.add_argument("--inputs", nargs=3, metavar=("A", "A_TILDE", "B"), help="driver tensors as PFT1 files")
    run.add_argument("--s0", help="initial state as PFT1 (default: zeros for file inputs)")
    run.add_argument("--trajectory", help="also write chunk-boundary states as PFT1")
    return parser


def load_config(args: argparse.Namespace) -> BenchConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    keys = ("seed", "L", "R", "d", "chunk_len", "backends", "repeats", "scale",
            "tolerance", "sweep", "out", "format")
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    return BenchConfig.from_dict(data)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"parflow: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "verify":
            ok, rows = bench_mod.verify(cfg)
            text = bench_mod.format_report(rows, cfg.format, "verify", cfg, ok)
            bench_mod.write_report(text, cfg.out)
            if not ok:
                print(f"parflow: tolerance {cfg.tolerance:g} exceeded", file=sys.stderr)
            return EXIT_OK if ok else EXIT_TOLERANCE
        if args.command == "bench":
            rows = bench_mod.bench(cfg)
            text = bench_mod.format_report(rows, cfg.format, "bench", cfg, None)
            bench_mod.write_report(text, cfg.out)
            return EXIT_OK
        if cfg.out is None:
            print("parflow: config error: run needs --out", file=sys.stderr)
            return EXIT_CONFIG
        bench_mod.run(cfg, args.inputs, args.s0, args.trajectory)
        return EXIT_OK
    except FileNotFoundError as exc:
        print(f"parflow: input error: no such file: {exc.filename}", file=sys.stderr)
        return EXIT_INPUT
    except PFTError as exc:
        print(f"parflow: input error: parse error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ShapeError, ValueError) as exc:
        print(f"parflow: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"parflow: I/O error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
