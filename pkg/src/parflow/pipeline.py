"""Chunk, compute per-chunk flows, combine them with an associative scan."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, NamedTuple, Sequence

import numpy as np

from parflow import expflow, sigdelta, tensorinv
from parflow.counting import OpCounter, null_counter
from parflow.tensor import AffineFlow, ChunkInputs, ShapeError, check_state


class ChunkSpec(NamedTuple):
    offsets: tuple[tuple[int, int], ...]

    def __len__(self):
        return len(self.offsets)


def partition(L: int, chunk_len: int) -> ChunkSpec:
    if chunk_len < 1:
        raise ValueError(f"chunk_len must be >= 1, got {chunk_len}")
    if L < 0:
        raise ValueError(f"L must be >= 0, got {L}")
    return ChunkSpec(tuple((s, min(s + chunk_len, L)) for s in range(0, L, chunk_len)))


def compose(F1: AffineFlow, F2: AffineFlow, counter: OpCounter = null_counter) -> AffineFlow:
    """Apply ``F1`` then ``F2``: ``(P1 P2, Q1 P2 + Q2)``."""
    if F1.d != F2.d:
        raise ShapeError(f"cannot compose flows of dimension {F1.d} and {F2.d}")
    counter.matmul(F1.d, F1.d, F1.d, batch=2, phase="scan")
    return AffineFlow(F1.P @ F2.P, F1.Q @ F2.P + F2.Q)


def _sequential_scan(flows, counter):
    out = [flows[0]]
    for f in flows[1:]:
        out.append(compose(out[-1], f, counter))
    return out


def _tree_scan(flows, counter):
    """Work-efficient up-sweep / down-sweep scan on a fixed binary tree."""
    n = len(flows)
    size = 1
    while size < n:
        size *= 2
    ident = AffineFlow.identity(flows[0].d)
    tree = list(flows) + [ident] * (size - n)
    # up-sweep: tree[j] becomes the total of its subtree
    stride = 1
    while stride < size:
        for j in range(2 * stride - 1, size, 2 * stride):
            tree[j] = compose(tree[j - stride], tree[j], counter)
        stride *= 2
    # down-sweep: exclusive prefixes
    tree[size - 1] = ident
    stride = size // 2
    while stride >= 1:
        for j in range(2 * stride - 1, size, 2 * stride):
            left = tree[j - stride]
            tree[j - stride] = tree[j]
            tree[j] = compose(tree[j], left, counter)
        stride //= 2
    return [compose(tree[i], flows[i], counter) for i in range(n)]


def scan(flows: Sequence[AffineFlow], mode: str = "tree", counter: OpCounter = null_counter) -> list[AffineFlow]:
    """Inclusive prefixes ``out[i] = flows[0] then ... then flows[i]``.

    ``mode="sequential"`` is a left fold; ``mode="tree"`` uses a fixed
    combination tree, so its result is reproducible bit for bit.
    """
    if not flows:
        raise ValueError("scan needs at least one flow")
    if len({f.d for f in flows}) != 1:
        raise ShapeError("flows have different dimensions")
    if mode == "sequential":
        return _sequential_scan(flows, counter)
    if mode == "tree":
        return _tree_scan(flows, counter)
    raise ValueError(f"unknown scan mode {mode!r}")


def _seq_flow(inputs: ChunkInputs, counter: OpCounter = null_counter) -> AffineFlow:
    return expflow.affine_flow_product(inputs, "euler", counter)


CHUNK_BACKENDS: dict[str, Callable[..., AffineFlow]] = {
    "seq": _seq_flow,
    "tensorinv": tensorinv.chunk_affine_flow,
    "sigdelta": sigdelta.chunk_affine_flow,
    "expprod-euler": _seq_flow,
}


def chunk_flow(inputs: ChunkInputs, backend: str, counter: OpCounter = null_counter) -> AffineFlow:
    try:
        fn = CHUNK_BACKENDS[backend]
    except KeyError:
        raise ValueError(f"unknown backend {backend!r}; choose from {sorted(CHUNK_BACKENDS)}") from None
    return fn(inputs, counter=counter)


def solve_chunked(
    S0: np.ndarray,
    inputs: ChunkInputs,
    chunk_len: int | None = None,
    backend: str = "tensorinv",
    boundaries: bool = False,
    scan_mode: str = "tree",
    workers: int = 1,
    counter: OpCounter = null_counter,
):
    """Final state via chunked flows.

    ``chunk_len=None`` uses a single chunk. With ``boundaries`` set, also
    returns the states at every chunk end, stacked as ``(n_chunks + 1, d, d)``
    starting with ``S0``. ``workers > 1`` computes chunk flows on a thread
    pool; chunks share no data, so the result does not depend on ``workers``.
    """
    if backend not in CHUNK_BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; choose from {sorted(CHUNK_BACKENDS)}")
    check_state(S0, inputs.d, "S0")
    S0 = np.array(S0, dtype=np.float64)
    layout = partition(inputs.L, max(inputs.L, 1) if chunk_len is None else chunk_len)
    if len(layout) == 0:
        return (S0, S0[None]) if boundaries else S0

    chunks = [inputs.slice(s, e) for s, e in layout.offsets]
    if workers > 1:
        # counters are not thread-safe; each chunk gets its own and they are merged
        local = [OpCounter() for _ in chunks]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            flows = list(pool.map(lambda ic: chunk_flow(ic[0], backend, ic[1]), zip(chunks, local)))
        for c in local:
            for phase, n in c.madds_by_phase.items():
                counter.madd(n, phase)
            counter.alloc(c.peak)
            counter.free(c.peak)
    else:
        flows = [chunk_flow(c, backend, counter) for c in chunks]

    if len(flows) == 1:
        prefixes = flows
    else:
        prefixes = scan(flows, scan_mode, counter)
    final = prefixes[-1].apply(S0)
    if boundaries:
        states = [S0] + [p.apply(S0) for p in prefixes[:-1]] + [final]
        return final, np.stack(states)
    return final
