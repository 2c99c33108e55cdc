"""Seeded inputs, backend verification and instrumented benchmarks."""

from __future__ import annotations

import csv
import io
import json
import statistics
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from parflow import pft, recurrence
from parflow.counting import OpCounter
from parflow.pipeline import solve_chunked
from parflow.tensor import ChunkInputs, rel_frobenius

BACKENDS = ("seq", "tensorinv", "sigdelta", "expprod-euler")

CSV_COLUMNS = (
    "backend", "L", "R", "d", "chunk_len", "repeats",
    "time_min_ns", "time_median_ns", "madds", "peak_scalars", "max_rel_err",
)

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "command", "config", "passed", "rows"],
    "properties": {
        "schema": {"const": "parflow-report/1"},
        "command": {"enum": ["verify", "bench"]},
        "config": {"type": "object"},
        "passed": {"type": ["boolean", "null"]},
        "rows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": list(CSV_COLUMNS),
                "additionalProperties": False,
                "properties": {
                    "backend": {"enum": list(BACKENDS)},
                    "L": {"type": "integer", "minimum": 0},
                    "R": {"type": "integer", "minimum": 1},
                    "d": {"type": "integer", "minimum": 1},
                    "chunk_len": {"type": "integer", "minimum": 1},
                    "repeats": {"type": "integer", "minimum": 1},
                    "time_min_ns": {"type": "integer", "minimum": 0},
                    "time_median_ns": {"type": "integer", "minimum": 0},
                    "madds": {"type": "integer", "minimum": 0},
                    "peak_scalars": {"type": "integer", "minimum": 0},
                    "max_rel_err": {"type": ["number", "null"], "minimum": 0},
                },
            },
        },
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class BenchConfig:
    seed: int = 0
    L: int = 64
    R: int = 2
    d: int = 16
    chunk_len: int | None = None
    backends: list[str] = field(default_factory=lambda: list(BACKENDS))
    repeats: int = 1
    scale: float = 0.5
    tolerance: float = 1e-9
    sweep: list[int] | None = None
    out: str | None = None
    format: str = "csv"

    def __post_init__(self):
        for name in ("seed", "L", "R", "d", "repeats"):
            if not isinstance(getattr(self, name), int) or isinstance(getattr(self, name), bool):
                raise ConfigError(f"{name} must be an integer")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in uint64")
        if self.L < 0 or self.R < 1 or self.d < 1:
            raise ConfigError(f"invalid sizes L={self.L}, R={self.R}, d={self.d}")
        if self.chunk_len is not None and self.chunk_len < 1:
            raise ConfigError("chunk_len must be >= 1")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be > 0")
        if self.scale < 0:
            raise ConfigError("scale must be >= 0")
        unknown = set(self.backends) - set(BACKENDS)
        if unknown or not self.backends:
            raise ConfigError(f"unknown backends {sorted(unknown)}; choose from {list(BACKENDS)}")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.sweep is not None and any(L < 0 for L in self.sweep):
            raise ConfigError("sweep sizes must be >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------- generator

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def make_rng(seed: int) -> np.random.Generator:
    """Philox (counter-based, 2x64-bit key) keyed by two splitmix64 outputs of ``seed``."""
    state, k0 = splitmix64(seed)
    _, k1 = splitmix64(state)
    return np.random.Generator(np.random.Philox(key=np.array([k0, k1], dtype=np.uint64)))


def generate_inputs(seed: int, L: int, R: int, d: int, scale: float = 0.5) -> tuple[ChunkInputs, np.ndarray]:
    """Deterministic drivers and initial state.

    Draw order: ``S0`` noise ``(d, d)``, then ``A``, ``A_tilde``, ``B`` each
    ``(L, R, d)``, all standard normal. Drivers are scaled by
    ``scale / sqrt(R d)`` and ``S0 = Id + scale / sqrt(d) * noise``.
    """
    rng = make_rng(seed)
    z0 = rng.standard_normal((d, d))
    zs = [rng.standard_normal((L, R, d)) for _ in range(3)]
    if scale == 0:
        return ChunkInputs(*(np.zeros((L, R, d)) for _ in range(3))), np.eye(d)
    drivers = [z * (scale / np.sqrt(R * d)) for z in zs]
    return ChunkInputs(*drivers), np.eye(d) + z0 * (scale / np.sqrt(d))


# ---------------------------------------------------------------- backends


def run_backend(backend: str, S0, inputs, chunk_len=None, counter: OpCounter | None = None):
    """Final state from one backend; ``seq`` without chunking is the plain recurrence."""
    counter = counter if counter is not None else OpCounter()
    # inputs and the initial state are live for the whole call
    counter.alloc(3 * inputs.A.size + S0.size)
    if backend == "seq" and (chunk_len is None or chunk_len >= inputs.L):
        S = recurrence.run(S0, inputs, counter=counter)
    else:
        S = solve_chunked(S0, inputs, chunk_len, backend, counter=counter)
    counter.free(3 * inputs.A.size + S0.size)
    return S


def _measure(cfg: BenchConfig, L: int, repeats: int) -> list[dict]:
    inputs, S0 = generate_inputs(cfg.seed, L, cfg.R, cfg.d, cfg.scale)
    chunk_len = cfg.chunk_len if cfg.chunk_len is not None else max(L, 1)
    backends = list(cfg.backends)
    has_seq = "seq" in backends
    reference = run_backend("seq", S0, inputs) if has_seq else None
    rows = []
    for backend in backends:
        times = []
        for _ in range(repeats):
            counter = OpCounter()
            t0 = time.perf_counter_ns()
            S = run_backend(backend, S0, inputs, cfg.chunk_len, counter)
            times.append(time.perf_counter_ns() - t0)
        rows.append({
            "backend": backend,
            "L": L,
            "R": cfg.R,
            "d": cfg.d,
            "chunk_len": chunk_len,
            "repeats": repeats,
            "time_min_ns": int(min(times)),
            "time_median_ns": int(statistics.median(times)),
            "madds": int(counter.madds),
            "peak_scalars": int(counter.peak),
            "max_rel_err": rel_frobenius(S, reference) if has_seq else None,
        })
    return rows


def verify(cfg: BenchConfig) -> tuple[bool, list[dict]]:
    """Run every configured backend against the sequential oracle."""
    if "seq" not in cfg.backends:
        cfg = BenchConfig(**{**asdict(cfg), "backends": ["seq", *cfg.backends]})
    rows = _measure(cfg, cfg.L, cfg.repeats)
    ok = all(r["max_rel_err"] <= cfg.tolerance for r in rows)
    return ok, rows


def bench(cfg: BenchConfig) -> list[dict]:
    rows = []
    for L in cfg.sweep or [cfg.L]:
        rows.extend(_measure(cfg, L, cfg.repeats))
    return rows


def run(cfg: BenchConfig, input_paths=None, s0_path=None, trajectory_path=None):
    """Compute the final state of one backend; inputs generated or read from PFT1 files.

    Everything is parsed and computed before any output is written.
    """
    if input_paths is not None:
        arrays = [pft.read(p) for p in input_paths]
        inputs = ChunkInputs(*arrays)
        S0 = pft.read(s0_path) if s0_path is not None else np.zeros((inputs.d, inputs.d))
        if S0.shape != (inputs.d, inputs.d):
            raise ValueError(f"S0 has shape {S0.shape}, expected {(inputs.d, inputs.d)}")
    else:
        inputs, S0 = generate_inputs(cfg.seed, cfg.L, cfg.R, cfg.d, cfg.scale)
        if s0_path is not None:
            S0 = pft.read(s0_path)
    backend = cfg.backends[0]
    if trajectory_path is not None:
        # chunk-boundary states; chunk_len=1 yields the full trajectory
        S, states = solve_chunked(S0, inputs, cfg.chunk_len, backend, boundaries=True)
    else:
        S = run_backend(backend, S0, inputs, cfg.chunk_len)
    if cfg.out is not None:
        pft.write(cfg.out, S)
    if trajectory_path is not None:
        pft.write(trajectory_path, states)
    return S


# ---------------------------------------------------------------- reports


def format_report(rows: list[dict], fmt: str, command: str, cfg: BenchConfig, passed: bool | None) -> str:
    if fmt == "json":
        doc = {
            "schema": "parflow-report/1",
            "command": command,
            "config": asdict(cfg),
            "passed": passed,
            "rows": rows,
        }
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row[k] is None else row[k]) for k in CSV_COLUMNS})
    return buf.getvalue()


def write_report(text: str, out: str | None) -> None:
    if out is None:
        print(text, end="")
    else:
        Path(out).write_text(text)
