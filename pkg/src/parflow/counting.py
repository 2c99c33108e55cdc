"""Multiply-add and live-storage instrumentation.

Backends report every matrix product they execute to an :class:`OpCounter`,
using the exact operand shapes, and register their large intermediate
buffers with :meth:`OpCounter.alloc` / :meth:`OpCounter.free`. The counts are
therefore exact for the code path taken, not asymptotic estimates.
"""

from __future__ import annotations

from collections import defaultdict


class OpCounter:
    def __init__(self):
        self.madds_by_phase: dict[str, int] = defaultdict(int)
        self.live = 0
        self.peak = 0

    def madd(self, n: int, phase: str = "other") -> None:
        self.madds_by_phase[phase] += int(n)

    def matmul(self, m: int, k: int, n: int, batch: int = 1, phase: str = "other") -> None:
        self.madd(batch * m * k * n, phase)

    def alloc(self, n: int) -> None:
        self.live += int(n)
        self.peak = max(self.peak, self.live)

    def free(self, n: int) -> None:
        self.live -= int(n)

    @property
    def madds(self) -> int:
        return sum(self.madds_by_phase.values())

    def __repr__(self):
        return f"OpCounter(madds={self.madds}, peak={self.peak}, phases={dict(self.madds_by_phase)})"


class _NullCounter(OpCounter):
    def madd(self, n, phase="other"):
        pass

    def alloc(self, n):
        pass

    def free(self, n):
        pass


null_counter = _NullCounter()
