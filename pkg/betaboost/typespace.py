"""
Type classes of size N over an alphabet of size n.

Types are enumerated through a prefix tree. A prefix fixes the first few
counts; its children extend it by one entry, and the leaves are the complete
types. Disjoint sets of branches can be processed independently and their
results combined afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy.special import gammaln, xlogy

from betaboost.errors import DomainError


@dataclass(frozen=True)
class TypeClass:
    """Frequency counts of a length-N sequence; the counts sum to N."""

    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        counts = tuple(int(c) for c in self.counts)
        if not counts:
            raise DomainError("a type needs at least one cell")
        if any(c < 0 for c in counts):
            raise DomainError(f"negative count in type {counts}")
        object.__setattr__(self, "counts", counts)

    @property
    def size(self) -> int:
        return sum(self.counts)

    @property
    def length(self) -> int:
        return len(self.counts)

    def distribution(self) -> np.ndarray:
        """The empirical distribution p_T = counts / N."""
        return np.asarray(self.counts, dtype=float) / self.size

    def __str__(self) -> str:
        return f"TypeClass(N={self.size}, {self.counts})"


@dataclass(frozen=True)
class TypePrefix:
    """The first len(data) counts of some type of size `size` and `length` cells."""

    size: int
    length: int
    data: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.size < 0 or self.length < 1:
            raise DomainError(f"invalid prefix shape N={self.size}, n={self.length}")
        data = tuple(int(c) for c in self.data)
        if len(data) > self.length:
            raise DomainError(f"prefix {data} longer than {self.length}")
        if any(c < 0 for c in data) or sum(data) > self.size:
            raise DomainError(f"prefix {data} not extendable to size {self.size}")
        if len(data) == self.length and sum(data) != self.size:
            raise DomainError(f"complete prefix {data} does not sum to {self.size}")
        object.__setattr__(self, "data", data)

    @classmethod
    def root(cls, size: int, length: int) -> TypePrefix:
        return cls(size, length, ())

    @property
    def residual(self) -> int:
        return self.size - sum(self.data)

    @property
    def is_leaf(self) -> bool:
        return len(self.data) == self.length

    def to_type(self) -> TypeClass:
        if not self.is_leaf:
            raise DomainError(f"prefix {self.data} is not a complete type")
        return TypeClass(self.data)


def children(prefix: TypePrefix) -> list[TypePrefix]:
    """
    Extend a prefix by one entry.

    Before the last slot there is one child per residual value 0..N-sum;
    the last slot is forced to complete the sum to N.

    Raises:
        DomainError: If the prefix is already a complete type
    """
    depth = len(prefix.data)
    if depth >= prefix.length:
        raise DomainError(f"prefix {prefix.data} is a leaf")
    if depth < prefix.length - 1:
        values: Sequence[int] = range(prefix.residual + 1)
    else:
        values = (prefix.residual,)
    return [TypePrefix(prefix.size, prefix.length, prefix.data + (v,)) for v in values]


def children_last_entry_mod(prefix: TypePrefix, k: int, m: int) -> list[TypePrefix]:
    """
    The children whose last entry is congruent to k modulo m.

    Over k = 0..m-1 these lists partition children(prefix).
    """
    if m < 1 or not (0 <= k < m):
        raise DomainError(f"need 0 <= k < m, got k={k}, m={m}")
    return [child for child in children(prefix) if child.data[-1] % m == k]


def dfs_process(prefix: TypePrefix, processor: Callable[[TypeClass], None]) -> None:
    """Call processor once per complete type below prefix, in lexicographic order."""
    stack = [prefix]
    while stack:
        node = stack.pop()
        if len(node.data) == node.length:
            processor(node.to_type())
            continue
        stack.extend(reversed(children(node)))


def count_types(N: int, n: int) -> int:
    """The number of types C(N+n-1, n-1); exact for any size."""
    if N < 0 or n < 1:
        raise DomainError(f"need N >= 0 and n >= 1, got N={N}, n={n}")
    return math.comb(N + n - 1, n - 1)


def enumerate_types(N: int, n: int, prefix: Sequence[int] = ()) -> np.ndarray:
    """
    All types below a prefix as rows of an integer array, in DFS order.

    Args:
        N: Type size
        n: Alphabet size
        prefix: Fixed leading counts

    Returns:
        Array of shape (number of types, n)
    """
    start = TypePrefix(N, n, tuple(prefix))
    head = np.asarray(start.data, dtype=np.int64).reshape(1, -1)
    residual = np.array([start.residual], dtype=np.int64)
    for _ in range(len(start.data), n - 1):
        reps = residual + 1
        rows = np.repeat(np.arange(len(head)), reps)
        offsets = np.arange(int(reps.sum())) - np.repeat(np.cumsum(reps) - reps, reps)
        head = np.column_stack([head[rows], offsets])
        residual = residual[rows] - offsets
    if len(start.data) < n:
        head = np.column_stack([head, residual])
    return head


def log_multinomial(counts: np.ndarray) -> np.ndarray:
    """log of N! / prod(c_i!) along the last axis."""
    counts = np.asarray(counts, dtype=float)
    return gammaln(counts.sum(axis=-1) + 1) - gammaln(counts + 1).sum(axis=-1)


def log_emission_probability(counts: np.ndarray, p: np.ndarray) -> np.ndarray:
    """
    Log multinomial probabilities of stacked types under p.

    Types with a positive count on a zero-probability cell get -inf.
    """
    counts = np.asarray(counts, dtype=float)
    p = np.asarray(p, dtype=float)
    return log_multinomial(counts) + xlogy(counts, p).sum(axis=-1)


def emission_probability(
    T: Union[TypeClass, Sequence[int]], p: Union[Sequence[float], np.ndarray]
) -> float:
    """
    Probability that N draws from p have type T.

    Returns exactly 0 when T puts a count on a cell where p is zero.
    """
    counts = T.counts if isinstance(T, TypeClass) else tuple(T)
    p_arr = np.asarray(p, dtype=float).ravel()
    if len(counts) != len(p_arr):
        raise DomainError(f"type has {len(counts)} cells, p has {len(p_arr)}")
    return float(np.exp(log_emission_probability(np.asarray(counts), p_arr)))


def emission_probability_entropy_form(
    T: TypeClass, p: Union[Sequence[float], np.ndarray]
) -> float:
    """|T| * exp(-N (H(p_T) + H(p_T||p))), the method-of-types form."""
    p_arr = np.asarray(p, dtype=float).ravel()
    counts = np.asarray(T.counts, dtype=float)
    if np.any((counts > 0) & (p_arr <= 0)):
        return 0.0
    q = counts / T.size
    support = q > 0
    own_entropy = float(-xlogy(q, q).sum())
    divergence = float((q[support] * np.log(q[support] / p_arr[support])).sum())
    return float(np.exp(log_multinomial(counts) - T.size * (own_entropy + divergence)))
