"""Dense containers and contraction primitives shared by every backend.

Index conventions (all 0-based, row-major):

* ``Tensor3`` arrays have shape ``(L, R, d)``. Slice ``X[k]`` is the
  transpose of the ``d x R`` driver matrix at step ``k``, so row ``X[k, i]``
  is its ``i``-th column.
* ``Gram4`` arrays have shape ``(L, R, L, R)``; ``G[k, i, k', i']`` pairs the
  row ``(k, i)`` of one ``Tensor3`` with the row ``(k', i')`` of another.
* The flat index of the pair ``(k, i)`` is ``i + k * R``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from parflow.counting import OpCounter, null_counter


class ShapeError(ValueError):
    """Raised when array dimensions are inconsistent."""


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


def check_tensor3(X: np.ndarray, name: str = "tensor") -> tuple[int, int, int]:
    if X.ndim != 3:
        raise ShapeError(f"{name} must have shape (L, R, d), got {X.shape}")
    L, R, d = X.shape
    if R < 1 or d < 1:
        raise ShapeError(f"{name} needs R >= 1 and d >= 1, got {X.shape}")
    return L, R, d


def check_state(S: np.ndarray, d: int | None = None, name: str = "state") -> int:
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ShapeError(f"{name} must be square, got {S.shape}")
    if d is not None and S.shape[0] != d:
        raise ShapeError(f"{name} has dimension {S.shape[0]}, expected {d}")
    return S.shape[0]


def check_gram4(G: np.ndarray, name: str = "gram") -> tuple[int, int]:
    if G.ndim != 4 or G.shape[:2] != G.shape[2:]:
        raise ShapeError(f"{name} must have shape (L, R, L, R), got {G.shape}")
    return G.shape[0], G.shape[1]


@dataclass(frozen=True)
class ChunkInputs:
    """Driver tensors ``A``, ``A_tilde`` and ``B`` of a chunk, each ``(L, R, d)``.

    Step ``k`` contributes the increments ``A_k B_k^T`` (homogeneous part) and
    ``A~_k B_k^T`` (forcing part) with ``A_k = A[k].T``.
    """

    A: np.ndarray
    A_tilde: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        arrays = [_frozen(x) for x in (self.A, self.A_tilde, self.B)]
        for arr, name in zip(arrays, ("A", "A_tilde", "B")):
            check_tensor3(arr, name)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
        if not (arrays[0].shape == arrays[1].shape == arrays[2].shape):
            raise ShapeError(
                f"driver shapes differ: {[a.shape for a in arrays]}"
            )
        object.__setattr__(self, "A", arrays[0])
        object.__setattr__(self, "A_tilde", arrays[1])
        object.__setattr__(self, "B", arrays[2])

    @property
    def L(self) -> int:
        return self.A.shape[0]

    @property
    def R(self) -> int:
        return self.A.shape[1]

    @property
    def d(self) -> int:
        return self.A.shape[2]

    def slice(self, start: int, end: int) -> "ChunkInputs":
        return ChunkInputs(self.A[start:end], self.A_tilde[start:end], self.B[start:end])

    def homogeneous(self) -> "ChunkInputs":
        """Same drivers with the forcing term ``A_tilde`` set to zero."""
        return ChunkInputs(self.A, np.zeros_like(self.A_tilde), self.B)

    @classmethod
    def empty(cls, R: int, d: int) -> "ChunkInputs":
        z = np.zeros((0, R, d))
        return cls(z, z, z)


@dataclass(frozen=True)
class AffineFlow:
    """The affine map ``S -> S @ P + Q``; ``(Id, 0)`` is the identity."""

    P: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        P, Q = _frozen(self.P), _frozen(self.Q)
        d = check_state(P, name="P")
        check_state(Q, d, name="Q")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)

    @property
    def d(self) -> int:
        return self.P.shape[0]

    @classmethod
    def identity(cls, d: int) -> "AffineFlow":
        return cls(np.eye(d), np.zeros((d, d)))

    def apply(self, S: np.ndarray) -> np.ndarray:
        check_state(S, self.d)
        return S @ self.P + self.Q


class BlockIndex(NamedTuple):
    step: int
    rank: int

    def flat(self, R: int) -> int:
        return flat_index(self.step, self.rank, R)


def flat_index(k: int, i: int, R: int) -> int:
    if not 0 <= i < R or k < 0:
        raise IndexError(f"block index ({k}, {i}) out of range for R={R}")
    return i + k * R


def block_index(flat: int, R: int) -> BlockIndex:
    if flat < 0:
        raise IndexError(f"negative flat index {flat}")
    k, i = divmod(flat, R)
    return BlockIndex(k, i)


def contract_ab(A: np.ndarray, B: np.ndarray, counter: OpCounter = null_counter) -> np.ndarray:
    """Gram tensor ``G[k, i, k', i'] = sum_m A[k, i, m] * B[k', i', m]``."""
    LA, RA, dA = check_tensor3(A, "A")
    if A.shape != B.shape:
        raise ShapeError(f"A {A.shape} and B {B.shape} must match")
    counter.madd((LA * RA) ** 2 * dA, phase="gram")
    flat = A.reshape(LA * RA, dA) @ B.reshape(LA * RA, dA).T
    return flat.reshape(LA, RA, LA, RA)


def step_mask(L: int) -> np.ndarray:
    """Indicator ``k' < k`` broadcastable against a ``(L, R, L, R)`` tensor."""
    return np.tril(np.ones((L, L)), -1)[:, None, :, None]


def apply_strict_lower_mask(G: np.ndarray) -> np.ndarray:
    """Zero every block except those with strictly earlier column step."""
    L, _ = check_gram4(G)
    return G * step_mask(L)


def identity4(L: int, R: int) -> np.ndarray:
    return np.eye(L * R).reshape(L, R, L, R)


def flatten_block(G: np.ndarray) -> np.ndarray:
    L, R = check_gram4(G)
    return G.reshape(L * R, L * R)


def unflatten_block(M: np.ndarray, L: int, R: int) -> np.ndarray:
    if M.shape != (L * R, L * R):
        raise ShapeError(f"matrix {M.shape} does not match L={L}, R={R}")
    return M.reshape(L, R, L, R)


def compose4(G: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Tensor composition: contract the inner ``(step, rank)`` pair."""
    L, R = check_gram4(G)
    if G.shape != H.shape:
        raise ShapeError(f"cannot compose {G.shape} with {H.shape}")
    return unflatten_block(flatten_block(G) @ flatten_block(H), L, R)


def apply4(G: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Contract a ``Gram4`` with a ``Tensor3`` over the ``(step, rank)`` pair."""
    L, R = check_gram4(G)
    LX, RX, d = check_tensor3(X)
    if (LX, RX) != (L, R):
        raise ShapeError(f"cannot apply {G.shape} to {X.shape}")
    return (flatten_block(G) @ X.reshape(L * R, d)).reshape(L, R, d)


def rel_frobenius(x: np.ndarray, ref: np.ndarray) -> float:
    """``||x - ref||_F / max(||ref||_F, tiny)``."""
    denom = max(float(np.linalg.norm(ref)), np.finfo(float).tiny)
    return float(np.linalg.norm(np.asarray(x) - ref)) / denom
