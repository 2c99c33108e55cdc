"""Chunk solver by block-triangular tensor inversion ("tensorInv").

The coefficient tensors solve ``W = A + (M * AB^T) W`` and
``U = A~ + (M * AB^T) U`` with ``M`` the strict step mask, so
``W = C^{-1} A`` and ``U = C^{-1} A~`` for ``C = Id - M * AB^T``. ``C`` is
block lower triangular in the step index and ``C^{-1}`` is obtained by block
forward substitution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from parflow.counting import OpCounter, null_counter
from parflow.tensor import (
    AffineFlow,
    ChunkInputs,
    ShapeError,
    apply_strict_lower_mask,
    check_gram4,
    check_state,
    check_tensor3,
    contract_ab,
    identity4,
)

PIVOT_RTOL = 1e-13


class SingularBlockError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class BlockTriangularSystem:
    """``C`` of shape ``(L, R, L, R)``, zero above the block diagonal.

    ``unit_diagonal`` records that every diagonal block is exactly ``Id_R``
    (always true for systems from :func:`build_system`), which lets the
    substitution skip the diagonal solves.
    """

    C: np.ndarray
    unit_diagonal: bool = False

    def __post_init__(self):
        L, R = check_gram4(self.C, "C")
        upper = np.triu(np.ones((L, L)), 1)[:, None, :, None]
        if np.any(self.C * upper != 0):
            raise ValueError("C has nonzero blocks above the block diagonal")


@dataclass(frozen=True)
class SolvedCoefficients:
    W: np.ndarray
    U: np.ndarray


def build_system(A: np.ndarray, B: np.ndarray, counter: OpCounter = null_counter) -> BlockTriangularSystem:
    L, R, _ = check_tensor3(A, "A")
    if A.shape != B.shape:
        raise ShapeError(f"A {A.shape} and B {B.shape} must match")
    C = identity4(L, R) - apply_strict_lower_mask(contract_ab(A, B, counter))
    counter.alloc(C.size)
    return BlockTriangularSystem(C, unit_diagonal=True)


def gauss_jordan_inverse(block: np.ndarray) -> np.ndarray:
    """Invert a small square block with partial pivoting.

    Raises :class:`SingularBlockError` when a pivot falls below
    ``PIVOT_RTOL * ||block||_inf``.
    """
    n = block.shape[0]
    aug = np.hstack([np.array(block, dtype=np.float64), np.eye(n)])
    threshold = PIVOT_RTOL * np.abs(block).sum(axis=1).max(initial=0.0)
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[piv, col]) <= threshold or aug[piv, col] == 0.0:
            raise SingularBlockError(f"singular diagonal block (pivot {aug[piv, col]:.3e})")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        others = np.arange(n) != col
        aug[others] -= np.outer(aug[others, col], aug[col])
    return aug[:, n:]


def invert_block_triangular(sys: BlockTriangularSystem, counter: OpCounter = null_counter) -> np.ndarray:
    """Block forward substitution for ``D = C^{-1}``.

    Row-of-blocks ``t`` is ``D[t, t] = C[t, t]^{-1}`` and, for ``s < t``,
    ``D[t, s] = -D[t, t] sum_{r=s}^{t-1} C[t, r] D[r, s]``. Rows are computed
    in order; the blocks of one row are independent of each other.
    """
    C = sys.C
    L, R = C.shape[:2]
    n = L * R
    Cf = C.reshape(n, n)
    Df = np.zeros((n, n))
    counter.alloc(Df.size)
    for t in range(L):
        rows = slice(t * R, (t + 1) * R)
        if sys.unit_diagonal:
            diag_inv = np.eye(R)
        else:
            diag_inv = gauss_jordan_inverse(Cf[rows, rows])
            counter.matmul(R, R, R, phase="substitution")
        Df[rows, rows] = diag_inv
        if t == 0:
            continue
        # D[r, s] = 0 for s > r, so summing r over [0, t) equals r over [s, t).
        acc = Cf[rows, : t * R] @ Df[: t * R, : t * R]
        counter.matmul(R, t * R, t * R, phase="substitution")
        if not sys.unit_diagonal:
            acc = diag_inv @ acc
            counter.matmul(R, R, t * R, phase="substitution")
        Df[rows, : t * R] = -acc
    return Df.reshape(L, R, L, R)


def solve_wu(
    D: np.ndarray, A: np.ndarray, A_tilde: np.ndarray, counter: OpCounter = null_counter
) -> SolvedCoefficients:
    L, R = check_gram4(D, "D")
    LA, RA, d = check_tensor3(A, "A")
    if A.shape != A_tilde.shape or (LA, RA) != (L, R):
        raise ShapeError(f"D {D.shape}, A {A.shape}, A_tilde {A_tilde.shape} disagree")
    n = L * R
    rhs = np.concatenate([A.reshape(n, d), A_tilde.reshape(n, d)], axis=1)
    sol = D.reshape(n, n) @ rhs
    counter.matmul(n, n, 2 * d, phase="solve")
    counter.alloc(sol.size)
    return SolvedCoefficients(sol[:, :d].reshape(L, R, d), sol[:, d:].reshape(L, R, d))


def assemble_state(
    S0: np.ndarray, coeffs: SolvedCoefficients, B: np.ndarray, counter: OpCounter = null_counter
) -> np.ndarray:
    """``S_1 = S_0 + sum_k (S_0 W_k + U_k) B_k^T``."""
    L, R, d = check_tensor3(B, "B")
    check_state(S0, d, "S0")
    if coeffs.W.shape != B.shape or coeffs.U.shape != B.shape:
        raise ShapeError(f"coefficients {coeffs.W.shape} do not match B {B.shape}")
    n = L * R
    # rows of (U + W S0^T) are the columns of S0 W_k + U_k
    temp = coeffs.U.reshape(n, d) + coeffs.W.reshape(n, d) @ S0.T
    counter.matmul(n, d, d, phase="assemble")
    counter.matmul(d, n, d, phase="assemble")
    return S0 + temp.T @ B.reshape(n, d)


def affine_from_coefficients(
    coeffs: SolvedCoefficients, B: np.ndarray, counter: OpCounter = null_counter
) -> AffineFlow:
    L, R, d = check_tensor3(B, "B")
    n = L * R
    Bf = B.reshape(n, d)
    P = np.eye(d) + coeffs.W.reshape(n, d).T @ Bf
    Q = coeffs.U.reshape(n, d).T @ Bf
    counter.matmul(d, n, d, batch=2, phase="assemble")
    return AffineFlow(P, Q)


def solve_coefficients(inputs: ChunkInputs, counter: OpCounter = null_counter) -> SolvedCoefficients:
    sys = build_system(inputs.A, inputs.B, counter)
    D = invert_block_triangular(sys, counter)
    coeffs = solve_wu(D, inputs.A, inputs.A_tilde, counter)
    counter.free(sys.C.size + D.size)
    return coeffs


def chunk_affine_flow(inputs: ChunkInputs, counter: OpCounter = null_counter) -> AffineFlow:
    """``(P, Q)`` with ``P = Id + sum_k W_k B_k^T`` and ``Q = sum_k U_k B_k^T``."""
    if inputs.L == 0:
        return AffineFlow.identity(inputs.d)
    coeffs = solve_coefficients(inputs, counter)
    flow = affine_from_coefficients(coeffs, inputs.B, counter)
    counter.free(coeffs.W.size + coeffs.U.size)
    return flow


def solve_chunk(S0: np.ndarray, inputs: ChunkInputs, counter: OpCounter = null_counter) -> np.ndarray:
    """Single-chunk ``S_1`` via tensor inversion."""
    check_state(S0, inputs.d, "S0")
    if inputs.L == 0:
        return np.array(S0, dtype=np.float64)
    coeffs = solve_coefficients(inputs, counter)
    S1 = assemble_state(S0, coeffs, inputs.B, counter)
    counter.free(coeffs.W.size + coeffs.U.size)
    return S1
