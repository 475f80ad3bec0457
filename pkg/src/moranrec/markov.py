"""Shared container for exact generator matrices over enumerated state spaces."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Square rate matrix with rows/columns labelled by explicit states.

    Rows sum to zero; the diagonal is minus the off-diagonal row sum.
    """

    labels: tuple
    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (len(self.labels), len(self.labels)):
            raise ValueError("matrix shape must match the number of labels")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(self.labels)})

    def index(self, label) -> int:
        return self._index[label]

    def rate(self, a, b) -> float:
        return float(self.matrix[self.index(a), self.index(b)])

    @property
    def size(self) -> int:
        return len(self.labels)


def enumerate_population_states(n_types: int, N: int) -> list[tuple[int, ...]]:
    """All count vectors of length ``n_types`` summing to ``N``.

    Lexicographic with the first coordinate descending, so monomorphic
    states in the first type come first; the order is the fixed row order
    of population-level generator matrices.
    """

    def rec(remaining: int, slots: int) -> Iterator[tuple[int, ...]]:
        if slots == 1:
            yield (remaining,)
            return
        for c in range(remaining, -1, -1):
            for rest in rec(remaining - c, slots - 1):
                yield (c,) + rest

    return list(rec(N, n_types))


def count_population_states(n_types: int, N: int) -> int:
    """Number of count vectors: C(N + n_types - 1, n_types - 1)."""
    from math import comb

    return comb(N + n_types - 1, n_types - 1)


def assert_sorted_times(times: Sequence[float]) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("time grid must be a nonempty 1-D sequence")
    if np.any(np.diff(t) < 0) or t[0] < 0:
        raise ValueError("time grid must be nondecreasing and nonnegative")
    return t
