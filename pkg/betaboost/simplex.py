"""
Probability tables on k x l contingency grids.

Entropy, KL divergence, mutual information and M-projection for general
tables, plus the one-parameter paths p(t) through 2x2 product tables that
keep the marginals fixed. All quantities are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np
from scipy.special import xlogy

from betaboost.errors import DomainError

SUM_TOLERANCE = 1e-12
INPUT_SUM_TOLERANCE = 1e-9
ZERO_CELL = 1e-15
PRODUCT_TOLERANCE = 1e-10
BISECT_MAX_ITER = 200
BISECT_WIDTH = 1e-13

# Direction of a path through 2x2 tables: +t on the diagonal, -t off it.
PATH_DIRECTION = np.array([[1.0, -1.0], [-1.0, 1.0]])

ProbabilityLike = Union[Sequence[float], np.ndarray, "ContingencyTable", "Marginal"]


def _check_probabilities(values: np.ndarray, tolerance: float, what: str) -> None:
    if np.any(values < -ZERO_CELL):
        raise DomainError(f"{what} has a negative entry: {values.min()!r}")
    total = float(values.sum())
    if abs(total - 1.0) > tolerance:
        raise DomainError(f"{what} sums to {total!r}, not 1")


@dataclass(frozen=True)
class Marginal:
    """A probability vector, typically a row or column sum of a table."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.clip(np.asarray(self.probs, dtype=float).ravel(), 0.0, None)
        _check_probabilities(probs, SUM_TOLERANCE, "marginal")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class ContingencyTable:
    """
    A k x l table of probabilities, an element of the simplex P_{k,l}.

    Cells are stored as a read-only float array. Entries within 1e-15 below
    zero are snapped to zero.
    """

    cells: np.ndarray

    def __post_init__(self) -> None:
        cells = np.array(self.cells, dtype=float)
        if cells.ndim != 2 or 0 in cells.shape:
            raise DomainError(f"table must be a non-empty 2-d array, got {cells.shape}")
        _check_probabilities(cells, SUM_TOLERANCE, "table")
        cells = np.clip(cells, 0.0, None)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def from_counts(
        cls, counts: Union[Sequence[Sequence[float]], np.ndarray]
    ) -> ContingencyTable:
        """Normalize a nonnegative count table."""
        arr = np.asarray(counts, dtype=float)
        total = arr.sum()
        if total <= 0:
            raise DomainError("count table has no mass")
        return cls(arr / total)

    @property
    def k(self) -> int:
        return self.cells.shape[0]

    @property
    def l(self) -> int:  # noqa: E743
        return self.cells.shape[1]

    @property
    def marginal_a(self) -> Marginal:
        """First (row) marginal p_A."""
        return Marginal(self.cells.sum(axis=1))

    @property
    def marginal_b(self) -> Marginal:
        """Second (column) marginal p_B."""
        return Marginal(self.cells.sum(axis=0))

    def __str__(self) -> str:
        rows = "; ".join(" ".join(f"{c:.6g}" for c in row) for row in self.cells)
        return f"ContingencyTable({self.k}x{self.l}: [{rows}])"


def _as_array(p: ProbabilityLike) -> np.ndarray:
    if isinstance(p, ContingencyTable):
        return p.cells
    if isinstance(p, Marginal):
        return p.probs
    return np.asarray(p, dtype=float)


def entropy(p: ProbabilityLike) -> float:
    """
    Shannon entropy -sum p log p in nats, with 0 log 0 = 0.

    Raises:
        DomainError: If an entry is negative or the sum is off by more than 1e-9
    """
    arr = _as_array(p)
    _check_probabilities(arr, INPUT_SUM_TOLERANCE, "distribution")
    arr = np.clip(arr, 0.0, None)
    return max(0.0, float(-xlogy(arr, arr).sum()))


def kl_divergence(p: ProbabilityLike, q: ProbabilityLike) -> float:
    """
    Kullback-Leibler divergence H(p||q) = sum p log(p/q).

    Raises:
        DomainError: If shapes differ or p is not absolutely continuous wrt q
    """
    pa = np.clip(_as_array(p), 0.0, None)
    qa = np.clip(_as_array(q), 0.0, None)
    if pa.shape != qa.shape:
        raise DomainError(f"shape mismatch: {pa.shape} vs {qa.shape}")
    support = pa > ZERO_CELL
    if np.any(support & (qa <= ZERO_CELL)):
        raise DomainError("p puts mass where q has none")
    pa = np.where(support, pa, 0.0)
    qa = np.where(support, qa, 1.0)
    return max(0.0, float((xlogy(pa, pa) - xlogy(pa, qa)).sum()))


def m_projection(p: ContingencyTable) -> ContingencyTable:
    """The product of p's marginals; the KL-closest product table to p."""
    return ContingencyTable(np.outer(p.marginal_a.probs, p.marginal_b.probs))


def mutual_information(p: ContingencyTable) -> float:
    """The test statistic tau(p) = H(p_A) + H(p_B) - H(p)."""
    value = entropy(p.marginal_a) + entropy(p.marginal_b) - entropy(p)
    return max(0.0, value)


def mutual_information_cells(cells: np.ndarray) -> np.ndarray:
    """tau over stacked tables of shape (..., k, l), without validation."""
    cells = np.clip(cells, 0.0, None)
    rows = cells.sum(axis=-1)
    cols = cells.sum(axis=-2)
    joint = xlogy(cells, cells).sum(axis=(-2, -1))
    tau = joint - xlogy(rows, rows).sum(axis=-1) - xlogy(cols, cols).sum(axis=-1)
    return np.maximum(tau, 0.0)


def kl_divergence_cells(cells: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """H(q||reference) over stacked tables q; reference must be positive."""
    cells = np.clip(cells, 0.0, None)
    terms = xlogy(cells, cells) - xlogy(cells, reference)
    return np.maximum(terms.sum(axis=(-2, -1)), 0.0)


def pinsker_lower_bound(p: ProbabilityLike, q: ProbabilityLike) -> float:
    """2 * max|p - q|^2, a lower bound on H(p||q)."""
    diff = np.abs(_as_array(p) - _as_array(q))
    return 2.0 * float(diff.max()) ** 2


@dataclass(frozen=True)
class TPath:
    """
    The line p(t) = [[p00+t, p01-t], [p10-t, p11+t]] through a 2x2 product.

    Every table on the path has the base's marginals, and tau(p(t)) grows
    away from t = 0 in both directions.
    """

    base: ContingencyTable

    def __post_init__(self) -> None:
        if self.base.cells.shape != (2, 2):
            raise DomainError("paths are only defined through 2x2 tables")
        gap = np.abs(self.base.cells - m_projection(self.base).cells).max()
        if gap > PRODUCT_TOLERANCE:
            raise DomainError(f"path base is not a product table (gap {gap:.3g})")

    @classmethod
    def from_marginals(cls, p_a: float, p_b: float) -> TPath:
        """Path through the product of (p_a, 1-p_a) and (p_b, 1-p_b)."""
        return cls(ContingencyTable(np.outer([p_a, 1 - p_a], [p_b, 1 - p_b])))

    @property
    def t_min(self) -> float:
        c = self.base.cells
        return -min(c[0, 0], c[1, 1])

    @property
    def t_max(self) -> float:
        c = self.base.cells
        return min(c[0, 1], c[1, 0])


def uniform_path() -> TPath:
    """The path p0(t) through the uniform 2x2 table."""
    return TPath(ContingencyTable(np.full((2, 2), 0.25)))


def path_at(path: TPath, t: float) -> ContingencyTable:
    """
    The table p(t) on the path.

    Raises:
        DomainError: If t lies outside [t_min, t_max]
    """
    if not (path.t_min - ZERO_CELL <= t <= path.t_max + ZERO_CELL):
        raise DomainError(f"t={t!r} outside [{path.t_min!r}, {path.t_max!r}]")
    return ContingencyTable(path.base.cells + t * PATH_DIRECTION)


def bisect_increasing(
    func: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    target: Union[float, np.ndarray],
    max_iter: int = BISECT_MAX_ITER,
    width: float = BISECT_WIDTH,
) -> np.ndarray:
    """
    Elementwise bisection for func(x) = target on [lo, hi], func increasing.

    Returns the bracket midpoints after the width or iteration cap is hit.
    """
    lo, hi = np.broadcast_arrays(
        np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    )
    lo, hi = lo.copy(), hi.copy()
    target_arr = np.broadcast_to(np.asarray(target, dtype=float), lo.shape)
    for _ in range(max_iter):
        if lo.size == 0 or float(np.max(hi - lo)) <= width:
            break
        mid = 0.5 * (lo + hi)
        above = func(mid) > target_arr
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return 0.5 * (lo + hi)


def fiber_t_bounds(
    bases: np.ndarray, gamma: float
) -> tuple[np.ndarray, np.ndarray]:
    """
    t_gamma^- and t_gamma^+ for stacked 2x2 product tables.

    Where gamma exceeds the path's tau at an end, that end is returned.

    Args:
        bases: Product tables of shape (m, 2, 2)
        gamma: Level of the test statistic

    Returns:
        (t_minus, t_plus), each of shape (m,)
    """
    bases = np.asarray(bases, dtype=float)
    t_hi = np.minimum(bases[:, 0, 1], bases[:, 1, 0])
    t_lo = -np.minimum(bases[:, 0, 0], bases[:, 1, 1])
    if gamma <= 0:
        zeros = np.zeros(len(bases))
        return zeros, zeros.copy()

    def tau_at(t: np.ndarray) -> np.ndarray:
        return mutual_information_cells(bases + t[:, None, None] * PATH_DIRECTION)

    def tau_at_negated(s: np.ndarray) -> np.ndarray:
        return tau_at(-s)

    plus = bisect_increasing(tau_at, np.zeros_like(t_hi), t_hi, gamma)
    plus = np.where(tau_at(t_hi) <= gamma, t_hi, plus)
    minus = -bisect_increasing(tau_at_negated, np.zeros_like(t_lo), -t_lo, gamma)
    minus = np.where(tau_at(t_lo) <= gamma, t_lo, minus)
    return minus, plus


def _max_tau(path: TPath, end: float) -> float:
    return float(mutual_information_cells(path.base.cells + end * PATH_DIRECTION))


def t_gamma_plus(path: TPath, gamma: float) -> float:
    """
    The largest t > 0 with tau(p(t)) <= gamma.

    Raises:
        DomainError: If gamma is negative or exceeds tau at t_max
    """
    if gamma < 0:
        raise DomainError(f"gamma must be nonnegative, got {gamma!r}")
    if gamma == 0:
        return 0.0
    limit = _max_tau(path, path.t_max)
    if gamma > limit + ZERO_CELL:
        raise DomainError(f"gamma={gamma!r} exceeds the path maximum {limit!r}")
    _, plus = fiber_t_bounds(path.base.cells[None], gamma)
    return float(plus[0])


def t_gamma_minus(path: TPath, gamma: float) -> float:
    """
    The smallest t < 0 with tau(p(t)) <= gamma.

    Raises:
        DomainError: If gamma is negative or exceeds tau at t_min
    """
    if gamma < 0:
        raise DomainError(f"gamma must be nonnegative, got {gamma!r}")
    if gamma == 0:
        return 0.0
    limit = _max_tau(path, path.t_min)
    if gamma > limit + ZERO_CELL:
        raise DomainError(f"gamma={gamma!r} exceeds the path maximum {limit!r}")
    minus, _ = fiber_t_bounds(path.base.cells[None], gamma)
    return float(minus[0])


def path_length(path: TPath, gamma: float) -> float:
    """Length l_gamma = t_gamma^+ - t_gamma^- of the path inside tau <= gamma."""
    return t_gamma_plus(path, gamma) - t_gamma_minus(path, gamma)


@lru_cache(maxsize=256)
def reference_distribution(eta: float) -> ContingencyTable:
    """
    The uniform-marginals table p^eta = p0(t) with tau = eta and t >= 0.

    Raises:
        DomainError: If eta is outside [0, ln 2)
    """
    if not (0.0 <= eta < math.log(2)):
        raise DomainError(f"eta={eta!r} not realizable; need 0 <= eta < ln 2")
    path = uniform_path()
    return path_at(path, t_gamma_plus(path, eta))


def reference_t(eta: float) -> float:
    """t_eta^+ on the uniform path."""
    return float(reference_distribution(eta).cells[0, 0] - 0.25)


def uniform_marginal_t_bounds(eta: float) -> tuple[float, float]:
    """Closed-form interval known to contain t_eta^+ on the uniform path."""
    scale = 1.0 / (2.0 * math.sqrt(2.0))
    return scale * math.sqrt(eta / (2 * eta + 1)), scale * math.sqrt(eta)
