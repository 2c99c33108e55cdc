"""Propagators as ordered products of exponentials of low-rank increments.

For ``d x R`` factors ``A, B`` the exponential of the rank-``R`` matrix
``A B^T`` only needs an ``R x R`` matrix function:

    exp(A B^T) = Id + A phi1(B^T A) B^T,    phi1(z) = (e^z - 1) / z.

The Euler product replaces each factor by ``Id + A B^T`` and reproduces the
discrete recurrence exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from parflow.counting import OpCounter, null_counter
from parflow.tensor import AffineFlow, ChunkInputs, ShapeError

_SERIES_CUTOFF = 1e-4
_TAYLOR_TERMS = 20
_SCALED_NORM = 0.25


def phi1(x: float) -> float:
    """``(e^x - 1) / x`` with ``phi1(0) = 1``."""
    x = float(x)
    if abs(x) < _SERIES_CUTOFF:
        return 1.0 + x / 2.0 * (1.0 + x / 3.0 * (1.0 + x / 4.0 * (1.0 + x / 5.0)))
    return math.expm1(x) / x


def _squarings(M: np.ndarray) -> int:
    norm = np.abs(M).sum(axis=0).max(initial=0.0)
    if norm <= _SCALED_NORM:
        return 0
    return int(math.ceil(math.log2(norm / _SCALED_NORM)))


def expm_taylor(M: np.ndarray) -> np.ndarray:
    """Dense exponential by scaling and squaring around a 20-term Taylor core.

    The matrix is scaled by ``2**-s`` until its 1-norm is at most 1/4.
    """
    M = np.asarray(M, dtype=np.float64)
    s = _squarings(M)
    X = M / 2.0**s
    n = X.shape[0]
    E = np.eye(n)
    term = np.eye(n)
    for j in range(1, _TAYLOR_TERMS + 1):
        term = term @ X / j
        E = E + term
    for _ in range(s):
        E = E @ E
    return E


def phi1_matrix(Z: np.ndarray) -> np.ndarray:
    """Matrix ``phi1`` by scaled Taylor series and the doubling rule.

    Uses ``phi1(2X) = phi1(X) (e^X + Id) / 2`` together with ``e^{2X} = (e^X)^2``,
    so no inverse of ``Z`` is ever formed.
    """
    Z = np.asarray(Z, dtype=np.float64)
    s = _squarings(Z)
    X = Z / 2.0**s
    n = X.shape[0]
    # phi1(X) = sum_j X^j / (j+1)!, e^X = Id + X phi1(X)
    term = np.eye(n)
    phi = np.eye(n)
    for j in range(1, _TAYLOR_TERMS + 1):
        term = term @ X / (j + 1)
        phi = phi + term
    E = np.eye(n) + X @ phi
    for _ in range(s):
        phi = 0.5 * phi @ (E + np.eye(n))
        E = E @ E
    return phi


def exp_rank1(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``exp(a b^T) = Id + phi1(<b, a>) a b^T``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"vectors {a.shape} and {b.shape} must be equal-length 1-D")
    return np.eye(a.size) + phi1(b @ a) * np.outer(a, b)


def exp_lowrank(A: np.ndarray, B: np.ndarray, counter: OpCounter = null_counter) -> np.ndarray:
    """Exact ``exp(A B^T)`` for ``d x R`` factors."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or A.shape != B.shape:
        raise ShapeError(f"factors {A.shape} and {B.shape} must be equal d x R matrices")
    d, R = A.shape
    core = phi1_matrix(B.T @ A)
    counter.matmul(R, d, R, phase="expm")
    counter.matmul(d, R, R, phase="expm")
    counter.matmul(d, R, d, phase="expm")
    return np.eye(d) + (A @ core) @ B.T


@dataclass(frozen=True)
class Increment:
    """``A B^T`` with ``d x R`` factors."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        if np.ndim(self.A) != 2 or np.shape(self.A) != np.shape(self.B):
            raise ShapeError(f"increment factors {np.shape(self.A)} and {np.shape(self.B)} differ")

    @property
    def d(self) -> int:
        return self.A.shape[0]

    def dense(self) -> np.ndarray:
        return self.A @ self.B.T


def increments_from_inputs(inputs: ChunkInputs) -> list[Increment]:
    return [Increment(inputs.A[k].T, inputs.B[k].T) for k in range(inputs.L)]


def _factor(inc: Increment, mode: str, counter: OpCounter) -> np.ndarray:
    if mode == "exact":
        return exp_lowrank(inc.A, inc.B, counter)
    if mode == "euler":
        counter.matmul(inc.d, inc.A.shape[1], inc.d, phase="expm")
        return np.eye(inc.d) + inc.dense()
    raise ValueError(f"unknown mode {mode!r}, expected 'exact' or 'euler'")


def _tree_product(mats: list[np.ndarray]) -> np.ndarray:
    while len(mats) > 1:
        nxt = [mats[i] @ mats[i + 1] for i in range(0, len(mats) - 1, 2)]
        if len(mats) % 2:
            nxt.append(mats[-1])
        mats = nxt
    return mats[0]


def flow_product(
    increments: Sequence[Increment],
    mode: str = "exact",
    tree: bool = False,
    d: int | None = None,
    counter: OpCounter = null_counter,
) -> np.ndarray:
    """Ordered product ``exp(dw_0) exp(dw_1) ... exp(dw_{n-1})``.

    The earliest increment is the leftmost factor, matching states that are
    multiplied on the right. An empty list gives ``Id`` (``d`` is then
    required). ``tree=True`` multiplies pairwise in a fixed balanced tree.
    """
    if not increments:
        if d is None:
            raise ValueError("empty increment list needs an explicit d")
        return np.eye(d)
    dims = {inc.d for inc in increments}
    if len(dims) != 1 or (d is not None and dims != {d}):
        raise ShapeError(f"increments have inconsistent dimensions {sorted(dims)}")
    factors = [_factor(inc, mode, counter) for inc in increments]
    n = factors[0].shape[0]
    counter.matmul(n, n, n, batch=len(factors) - 1, phase="expm")
    if tree:
        return _tree_product(factors)
    P = factors[0]
    for F in factors[1:]:
        P = P @ F
    return P


def affine_step(A_k, At_k, B_k, mode: str = "exact", counter: OpCounter = null_counter) -> AffineFlow:
    """Affine flow of one step with ``d x R`` drivers.

    ``(P, Q)`` is read off the exponential of the augmented generator
    ``[[A B^T, 0], [A~ B^T, 0]] = [A; A~] [B; 0]^T``, which is again low rank.
    Euler mode gives ``(Id + A B^T, A~ B^T)``, one step of the recurrence.
    """
    d = A_k.shape[0]
    if mode == "euler":
        counter.matmul(d, A_k.shape[1], d, batch=2, phase="expm")
        return AffineFlow(np.eye(d) + A_k @ B_k.T, At_k @ B_k.T)
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}, expected 'exact' or 'euler'")
    E = exp_lowrank(np.vstack([A_k, At_k]), np.vstack([B_k, np.zeros_like(B_k)]), counter)
    return AffineFlow(E[:d, :d], E[d:, :d])


def affine_flow_product(inputs: ChunkInputs, mode: str = "exact", counter: OpCounter = null_counter) -> AffineFlow:
    """Chunk flow as the ordered product of per-step affine exponentials."""
    d = inputs.d
    P, Q = np.eye(d), np.zeros((d, d))
    for k in range(inputs.L):
        f = affine_step(inputs.A[k].T, inputs.A_tilde[k].T, inputs.B[k].T, mode, counter)
        P, Q = P @ f.P, Q @ f.P + f.Q
        counter.matmul(d, d, d, batch=2, phase="expm")
    return AffineFlow(P, Q)
