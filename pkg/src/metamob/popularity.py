"""Global visit counts with O(log n) weighted sampling.

Each location ``i`` carries weight ``m_i + epsilon``. The tree stores only
the integer counts; the smoothing term is added arithmetically during the
descent, so integer updates stay exact no matter what ``epsilon`` is.
"""
from __future__ import annotations

from typing import Iterable, Protocol


class UniformSource(Protocol):
    def random(self) -> float: ...


class PopularityTable:
    """Binary indexed tree over per-location visit counts.

    Args:
        size: number of locations.
        epsilon: additive smoothing applied to every location's weight.
    """

    def __init__(self, size: int, epsilon: float = 1.0):
        if size < 1:
            raise ValueError("size must be positive")
        if epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        self.size = size
        self.epsilon = float(epsilon)
        self._tree = [0] * (size + 1)
        self._counts = [0] * size
        self._total = 0
        top = 1
        while top * 2 <= size:
            top *= 2
        self._top = top

    @classmethod
    def from_counts(cls, counts: Iterable[int], epsilon: float = 1.0) -> PopularityTable:
        counts = list(counts)
        table = cls(len(counts), epsilon)
        for i, c in enumerate(counts):
            if c:
                table.increment(i, c)
        return table

    def increment(self, index: int, delta: int = 1) -> None:
        if not 0 <= index < self.size:
            raise IndexError(index)
        if self._counts[index] + delta < 0:
            raise ValueError("count would become negative")
        self._counts[index] += delta
        self._total += delta
        tree = self._tree
        j = index + 1
        n = self.size
        while j <= n:
            tree[j] += delta
            j += j & -j

    def count(self, index: int) -> int:
        return self._counts[index]

    def weight(self, index: int) -> float:
        return self._counts[index] + self.epsilon

    @property
    def counts(self) -> list[int]:
        """Live view of the raw counts; do not mutate."""
        return self._counts

    @property
    def total_count(self) -> int:
        return self._total

    @property
    def total_weight(self) -> float:
        return self._total + self.epsilon * self.size

    def probability(self, index: int) -> float:
        return self.weight(index) / self.total_weight

    def prefix_weight(self, index: int) -> float:
        """Sum of weights over locations ``0..index`` inclusive."""
        s = 0
        j = index + 1
        while j > 0:
            s += self._tree[j]
            j -= j & -j
        return s + self.epsilon * (index + 1)

    def find(self, u: float) -> int:
        """Smallest index whose inclusive prefix weight exceeds ``u``."""
        tree = self._tree
        eps = self.epsilon
        n = self.size
        pos = 0
        step = self._top
        while step:
            nxt = pos + step
            if nxt <= n:
                w = tree[nxt] + eps * step
                if w <= u:
                    u -= w
                    pos = nxt
            step >>= 1
        # float round-off can push u past the last cell
        return min(pos, n - 1)

    def sample(self, rng: UniformSource) -> int:
        total = self.total_weight
        if total <= 0:
            raise ValueError("cannot sample: total weight is zero")
        idx = self.find(rng.random() * total)
        # a zero-weight cell can only be hit through round-off at its left edge
        while self.weight(idx) <= 0:
            idx = self.find(rng.random() * total)
        return idx
