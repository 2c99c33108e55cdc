"""Sequential reference recurrence, DeltaNet parameterization and readout.

One step maps ``S -> S + S A_k B_k^T + A~_k B_k^T`` where ``A_k`` etc. are
``d x R`` matrices. Any grid spacing is assumed to be absorbed into ``B``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from parflow.counting import OpCounter, null_counter
from parflow.tensor import ChunkInputs, ShapeError, check_state


def step(S: np.ndarray, A_k: np.ndarray, At_k: np.ndarray, B_k: np.ndarray) -> np.ndarray:
    """Advance one step. ``A_k``, ``At_k`` and ``B_k`` are ``d x R``."""
    d = check_state(S)
    if not (A_k.shape == At_k.shape == B_k.shape) or A_k.ndim != 2 or A_k.shape[0] != d:
        raise ShapeError(
            f"step slices {A_k.shape}, {At_k.shape}, {B_k.shape} incompatible with d={d}"
        )
    return S + (S @ A_k + At_k) @ B_k.T


def run(
    S0: np.ndarray,
    inputs: ChunkInputs,
    trajectory: bool = False,
    counter: OpCounter = null_counter,
):
    """Fold :func:`step` over all steps.

    Returns the final state, or ``(final, states)`` with ``states`` of shape
    ``(L + 1, d, d)`` when ``trajectory`` is set.
    """
    d = check_state(S0, inputs.d, "S0")
    R = inputs.R
    S = np.array(S0, dtype=np.float64)
    states = [S] if trajectory else None
    for k in range(inputs.L):
        S = step(S, inputs.A[k].T, inputs.A_tilde[k].T, inputs.B[k].T)
        counter.matmul(d, d, R, phase="recurrence")
        counter.matmul(d, R, d, phase="recurrence")
        if trajectory:
            states.append(S)
    if trajectory:
        return S, np.stack(states)
    return S


@dataclass(frozen=True)
class DeltaNetParams:
    """Per-step keys ``(L, d)``, values ``(L, d)``, learning rates ``(L,)`` and optional queries."""

    keys: np.ndarray
    values: np.ndarray
    betas: np.ndarray
    queries: np.ndarray | None = None

    def __post_init__(self):
        keys = np.asarray(self.keys, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        betas = np.asarray(self.betas, dtype=np.float64)
        if keys.ndim != 2 or values.shape != keys.shape or betas.shape != keys.shape[:1]:
            raise ShapeError(
                f"keys {keys.shape}, values {values.shape}, betas {betas.shape} disagree"
            )
        if self.queries is not None and np.shape(self.queries) != keys.shape:
            raise ShapeError(f"queries {np.shape(self.queries)} != keys {keys.shape}")
        for arr in (keys, values, betas):
            if not np.all(np.isfinite(arr)):
                raise ValueError("DeltaNet parameters must be finite")
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "betas", betas)


def deltanet_params_to_inputs(p: DeltaNetParams) -> ChunkInputs:
    """Rank-1 drivers ``A = beta k``, ``A~ = -beta v``, ``B = -k``."""
    beta = p.betas[:, None]
    return ChunkInputs(
        A=(beta * p.keys)[:, None, :],
        A_tilde=(-beta * p.values)[:, None, :],
        B=(-p.keys)[:, None, :],
    )


def readout(S: np.ndarray, q: np.ndarray) -> np.ndarray:
    d = check_state(S)
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (d,):
        raise ShapeError(f"query {q.shape} does not match state dimension {d}")
    return S @ q
