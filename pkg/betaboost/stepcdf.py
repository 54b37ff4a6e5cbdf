"""
Step-function CDFs of the test statistic.

A StepCdf accumulates point masses at values of tau and answers
"mass at or below gamma" queries. The exact beta function of a reference
distribution is the StepCdf of tau(p_T) over all types T of size N, each
weighted by its multinomial probability.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from betaboost.errors import DomainError
from betaboost.mcint import robbins_log_integrand_cells
from betaboost.simplex import mutual_information_cells, reference_distribution
from betaboost.typespace import (
    TypePrefix,
    children,
    children_last_entry_mod,
    enumerate_types,
    log_emission_probability,
)

logger = logging.getLogger(__name__)

QUANTUM = 1e-14
MASS_TOLERANCE = 1e-9
CELLS_2X2 = 4
_KEY_LIMIT = 9.0e18


def _quantize(values: np.ndarray) -> np.ndarray:
    scaled = np.clip(np.asarray(values, dtype=float) / QUANTUM, -_KEY_LIMIT, _KEY_LIMIT)
    return np.rint(scaled).astype(np.int64)


class StepCdf:
    """
    A nondecreasing step function stored as sorted (value, mass) jumps.

    Values are quantized to multiples of 1e-14 before insertion so that
    floating-point near-duplicates share a jump. cumulative_at(v) counts
    every jump at or below v.
    """

    def __init__(self) -> None:
        self._keys = np.empty(0, dtype=np.int64)
        self._masses = np.empty(0, dtype=float)
        self._cumulative: Optional[np.ndarray] = None
        # inserts since the last read, folded in by _consolidate
        self._pending: list[tuple[np.ndarray, np.ndarray]] = []

    def _add(self, keys: np.ndarray, masses: np.ndarray) -> None:
        if len(keys) == 0:
            return
        self._pending.append((keys, masses))
        self._cumulative = None

    def _consolidate(self) -> None:
        if not self._pending:
            return
        all_keys = np.concatenate([self._keys] + [k for k, _ in self._pending])
        all_masses = np.concatenate([self._masses] + [m for _, m in self._pending])
        self._pending = []
        unique, inverse = np.unique(all_keys, return_inverse=True)
        self._keys = unique
        self._masses = np.bincount(
            inverse.ravel(), weights=all_masses, minlength=len(unique)
        )

    def account_for_events(
        self,
        probabilities: Union[Sequence[float], np.ndarray],
        values: Union[Sequence[float], np.ndarray],
    ) -> None:
        """
        Add probability * 1{x >= value} for each pair.

        Raises:
            DomainError: If any probability is negative
        """
        probs = np.asarray(probabilities, dtype=float).ravel()
        vals = np.asarray(values, dtype=float).ravel()
        if probs.shape != vals.shape:
            raise DomainError("probabilities and values differ in length")
        if np.any(probs < 0):
            raise DomainError("event probabilities must be nonnegative")
        keep = probs > 0
        self._add(_quantize(vals[keep]), probs[keep])

    def account_for_event(self, probability: float, value: float) -> None:
        """Add a single jump of size probability at value."""
        self.account_for_events([probability], [value])

    def merge(self, other: StepCdf) -> None:
        """Add other's function into this one."""
        other._consolidate()
        self._add(other._keys, other._masses)

    def _cumsum(self) -> np.ndarray:
        self._consolidate()
        if self._cumulative is None:
            self._cumulative = np.cumsum(self._masses)
        return self._cumulative

    def cumulative_at(self, value: Union[float, np.ndarray]):
        """Total mass of jumps at or below value; vectorized over value."""
        cumulative = self._cumsum()
        idx = np.searchsorted(self._keys, _quantize(value), side="right")
        padded = np.concatenate([[0.0], cumulative])
        result = padded[idx]
        return float(result) if np.ndim(result) == 0 else result

    @property
    def total_mass(self) -> float:
        cumulative = self._cumsum()
        return float(cumulative[-1]) if len(cumulative) else 0.0

    def jumps(self) -> tuple[np.ndarray, np.ndarray]:
        """(values, masses) of the jumps in increasing order."""
        self._consolidate()
        return self._keys * QUANTUM, self._masses.copy()

    def __len__(self) -> int:
        self._consolidate()
        return len(self._keys)

    def to_rows(self) -> list[tuple[float, float]]:
        """(gamma, cumulative mass) at every jump."""
        values, _ = self.jumps()
        return list(zip(values.tolist(), self._cumsum().tolist()))

    def dump(self, path: Union[str, Path]) -> None:
        """Write the gamma<TAB>beta table with 17 significant digits."""
        with open(path, "w", encoding="utf-8") as f:
            f.write("gamma\tbeta\n")
            for gamma, beta in self.to_rows():
                f.write(f"{gamma:.17g}\t{beta:.17g}\n")

    def __str__(self) -> str:
        return f"StepCdf({len(self)} jumps, mass={self.total_mass:.12g})"


def _check_alphabet(N: int, n: int) -> None:
    if N < 1:
        raise DomainError(f"N must be positive, got {N}")
    if n != CELLS_2X2:
        raise DomainError(f"tau needs a 2x2 table (n=4), got n={n}")


def _branch_events(
    N: int, reference: np.ndarray, prefix: Sequence[int]
) -> tuple[np.ndarray, np.ndarray]:
    types = enumerate_types(N, CELLS_2X2, prefix)
    probs = np.exp(log_emission_probability(types, reference))
    tau = mutual_information_cells(types.reshape(-1, 2, 2) / N)
    return probs, tau


def _branches_cdf(N: int, eta: float, prefixes: list[tuple[int, ...]]) -> StepCdf:
    """Private CDF over a set of disjoint branches; runs in worker processes."""
    reference = reference_distribution(eta).cells.ravel()
    cdf = StepCdf()
    for prefix in prefixes:
        cdf.account_for_events(*_branch_events(N, reference, prefix))
    return cdf


def exact_beta_cdf(N: int, eta: float, n: int = CELLS_2X2) -> StepCdf:
    """
    The exact beta function gamma -> Pr(tau(p_T) <= gamma) under p^eta.

    Raises:
        DomainError: If N < 1, n != 4 or eta is not realizable
    """
    _check_alphabet(N, n)
    root = TypePrefix.root(N, n)
    cdf = _branches_cdf(N, eta, [child.data for child in children(root)])
    logger.debug("exact beta N=%d eta=%g: %s", N, eta, cdf)
    _check_mass(cdf, N)
    return cdf


def branch_partition_sizes(N: int, n: int, modulus: int) -> list[int]:
    """Number of types in each of the modulus classes of root branches."""
    root = TypePrefix.root(N, n)
    sizes = []
    for k in range(modulus):
        sizes.append(
            sum(
                len(enumerate_types(N, n, child.data))
                for child in children_last_entry_mod(root, k, modulus)
            )
        )
    return sizes


def exact_beta_cdf_parallel(
    N: int,
    eta: float,
    n: int = CELLS_2X2,
    modulus: int = 1,
    workers: Optional[int] = None,
) -> StepCdf:
    """
    exact_beta_cdf with the root branches split by last entry modulo `modulus`.

    Each class is accumulated into a private CDF, in a worker process when
    workers allow, and the results are merged.

    Args:
        N: Sample size
        eta: Reference level
        n: Alphabet size, must be 4
        modulus: Number of branch classes
        workers: Process count; defaults to min(modulus, cpu count)

    Returns:
        The merged StepCdf
    """
    _check_alphabet(N, n)
    if modulus < 1:
        raise DomainError(f"modulus must be at least 1, got {modulus}")
    reference_distribution(eta)
    root = TypePrefix.root(N, n)
    classes = [
        [child.data for child in children_last_entry_mod(root, k, modulus)]
        for k in range(modulus)
    ]
    if workers is None:
        workers = min(modulus, os.cpu_count() or 1)

    result = StepCdf()
    if modulus == 1 or workers <= 1:
        for prefixes in classes:
            result.merge(_branches_cdf(N, eta, prefixes))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_branches_cdf, N, eta, p) for p in classes]
            for future in futures:
                result.merge(future.result())
    logger.debug("parallel exact beta N=%d modulus=%d: %s", N, modulus, result)
    _check_mass(result, N)
    return result


def _check_mass(cdf: StepCdf, N: int) -> None:
    if abs(cdf.total_mass - 1.0) > MASS_TOLERANCE:
        logger.warning("exact CDF for N=%d has total mass %.15g", N, cdf.total_mass)


def robbins_beta_cdf(N: int, eta: float) -> StepCdf:
    """
    The lattice sum of the Robbins integrand over types with tau <= gamma.

    Types with all counts positive contribute the Robbins value; types on
    the boundary contribute their exact probability. The result dominates
    exact_beta_cdf pointwise.
    """
    _check_alphabet(N, CELLS_2X2)
    reference = reference_distribution(eta).cells
    flat_reference = reference.ravel()
    cdf = StepCdf()
    for child in children(TypePrefix.root(N, CELLS_2X2)):
        types = enumerate_types(N, CELLS_2X2, child.data)
        cells = types.reshape(-1, 2, 2) / N
        positive = np.all(types > 0, axis=1)
        log_values = np.where(
            positive,
            robbins_log_integrand_cells(cells, reference, N),
            log_emission_probability(types, flat_reference),
        )
        cdf.account_for_events(np.exp(log_values), mutual_information_cells(cells))
    return cdf
