"""Chunk solver on a two-parameter grid swept along antidiagonals ("sigDelta").

The grid cell ``W(m, k)`` (``0 <= m <= k < L``) obeys

    W(0, k)     = A_k
    W(k+1, k+1) = W(k, k+1) + W(k, k) B_k^T A_{k+1}
    W(m+1, k+1) = W(m, k+1) + W(m+1, k) - W(m, k)
                  + W(m, m) B_m^T (A_{k+1} - A_k)          (m < k)

and its diagonal ``W(k, k)`` equals the coefficient ``W_k`` of the chunk
solution. ``U`` follows the same recursion from ``A~`` and is carried along by
concatenating ``A`` and ``A~`` on the trailing axis.

Cells with equal ``m + k`` (one antidiagonal, or "wave") have no mutual
dependencies, so a wave is updated in one vectorized step. Only three waves
are kept in memory, indexed by ``m``, plus the committed diagonal.
"""

from __future__ import annotations

import numpy as np

from parflow.counting import OpCounter, null_counter
from parflow.tensor import AffineFlow, ChunkInputs, ShapeError, check_state, check_tensor3
from parflow.tensorinv import SolvedCoefficients, affine_from_coefficients, assemble_state


def antidiagonal_schedule(L: int) -> list[list[tuple[int, int]]]:
    """Waves ``i = 0 .. 2L-2``; wave ``i`` holds cells ``(m, k)`` with ``m + k = i``, ``m <= k``."""
    if L < 1:
        raise ValueError(f"schedule needs L >= 1, got {L}")
    waves = []
    for i in range(2 * L - 1):
        lo = max(0, i - L + 1)
        waves.append([(m, i - m) for m in range(lo, i // 2 + 1)])
    return waves


def cell_dependencies(m: int, k: int) -> list[tuple[int, int]]:
    """Grid cells read when computing ``(m, k)``."""
    if m == 0:
        return []
    if m == k:
        return [(m - 1, k), (m - 1, m - 1)]
    return [(m - 1, k), (m, k - 1), (m - 1, k - 1), (m - 1, m - 1)]


def _gram_tables(A, B, counter):
    L, R, d = A.shape
    dA = A[1:] - A[:-1]  # (L-1, R, d)
    # inc[m, j] = (A[j+1] - A[j]) B[m]^T, the interior correction for column j
    inc = np.einsum("jad,mbd->mjab", dA, B)
    counter.matmul(R, d, R, batch=L * (L - 1), phase="gram")
    # step[m] = A[m+1] B[m]^T, the diagonal correction
    step = np.einsum("mad,mbd->mab", A[1:], B[:-1])
    counter.matmul(R, d, R, batch=L - 1, phase="gram")
    counter.alloc(inc.size + step.size)
    return inc, step


def wavefront_solve(
    A: np.ndarray,
    A_tilde: np.ndarray,
    B: np.ndarray,
    counter: OpCounter = null_counter,
    cell_order: str = "vectorized",
) -> SolvedCoefficients:
    """Solve for ``W`` and ``U`` along antidiagonals.

    ``cell_order`` selects how cells inside one wave are visited:
    ``"vectorized"`` (one batched update), ``"forward"`` or ``"reverse"``
    (one cell at a time, ascending or descending ``m``). All orders write
    disjoint cells and give identical results.
    """
    L, R, d = check_tensor3(A, "A")
    if not (A.shape == A_tilde.shape == B.shape):
        raise ShapeError(f"A {A.shape}, A_tilde {A_tilde.shape}, B {B.shape} must match")
    if cell_order not in ("vectorized", "forward", "reverse"):
        raise ValueError(f"unknown cell_order {cell_order!r}")
    if L == 0:
        return SolvedCoefficients(np.zeros((0, R, d)), np.zeros((0, R, d)))

    rhs = np.concatenate([A, A_tilde], axis=-1)  # (L, R, 2d)
    inc, step = _gram_tables(A, B, counter)

    diag = np.zeros_like(rhs)
    older, prev, cur = (np.zeros_like(rhs) for _ in range(3))
    counter.alloc(4 * rhs.size)

    for i in range(2 * L - 1):
        lo = max(0, i - L + 1)
        hi = i // 2  # inclusive
        if lo == 0:
            cur[0] = rhs[i]
        # interior cells: 1 <= m, 2m < i
        m_int = np.arange(max(lo, 1), (i + 1) // 2)
        if m_int.size:
            if cell_order == "vectorized":
                corr = inc[m_int - 1, i - m_int - 1] @ diag[m_int - 1]
                cur[m_int] = prev[m_int - 1] + prev[m_int] - older[m_int - 1] + corr
            else:
                cells = m_int if cell_order == "forward" else m_int[::-1]
                for m in cells:
                    corr = inc[m - 1, i - m - 1] @ diag[m - 1]
                    cur[m] = prev[m - 1] + prev[m] - older[m - 1] + corr
            counter.matmul(R, R, 2 * d, batch=m_int.size, phase="grid")
        if i % 2 == 0:
            if hi >= 1:
                cur[hi] = prev[hi - 1] + step[hi - 1] @ diag[hi - 1]
                counter.matmul(R, R, 2 * d, phase="grid")
            diag[hi] = cur[hi]
        older, prev, cur = prev, cur, older

    counter.free(inc.size + step.size + 3 * rhs.size)
    return SolvedCoefficients(np.ascontiguousarray(diag[..., :d]), np.ascontiguousarray(diag[..., d:]))


def assemble_state_sig(S0, coeffs, B, counter: OpCounter = null_counter) -> np.ndarray:
    return assemble_state(S0, coeffs, B, counter)


def solve_chunk(S0: np.ndarray, inputs: ChunkInputs, counter: OpCounter = null_counter) -> np.ndarray:
    check_state(S0, inputs.d, "S0")
    if inputs.L == 0:
        return np.array(S0, dtype=np.float64)
    coeffs = wavefront_solve(inputs.A, inputs.A_tilde, inputs.B, counter)
    S1 = assemble_state(S0, coeffs, inputs.B, counter)
    counter.free(coeffs.W.size + coeffs.U.size)
    return S1


def chunk_affine_flow(inputs: ChunkInputs, counter: OpCounter = null_counter) -> AffineFlow:
    if inputs.L == 0:
        return AffineFlow.identity(inputs.d)
    coeffs = wavefront_solve(inputs.A, inputs.A_tilde, inputs.B, counter)
    flow = affine_from_coefficients(coeffs, inputs.B, counter)
    counter.free(coeffs.W.size + coeffs.U.size)
    return flow
