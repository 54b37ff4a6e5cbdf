"""
Tables of log beta values.

A table stores log beta_N^{p^eta}(gamma) at grid points (N, KL(p^gamma||p^eta))
as two sides: gamma below eta and gamma above eta. Lookups clamp gamma to
the threshold gamma_0(N), interpolate linearly in KL within a row and then
linearly in N, and extrapolate linearly in N past the largest row.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from betaboost.config import McParams
from betaboost.errors import ConvergenceWarning, DomainError, TableFormatError
from betaboost.mcint import IntegrandContext, monte_carlo_integrate
from betaboost.simplex import (
    PATH_DIRECTION,
    bisect_increasing,
    kl_divergence_cells,
    mutual_information_cells,
    reference_distribution,
    reference_t,
)
from betaboost.stepcdf import exact_beta_cdf_parallel

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAX_TAU = math.log(2.0)
T_END = 0.25
TICK_DECIMALS = 12
LOWER = "lower"
UPPER = "upper"

# (N range start, range stop, spacing)
N_SPACING = [
    (5, 100, 5),
    (100, 200, 10),
    (200, 500, 50),
    (500, 1000, 100),
    (1000, 10000, 1000),
]


def generate_n_list() -> list[int]:
    """Sample sizes of a full table: 5, 10, ..., 100, 110, ..., 10000."""
    values: set[int] = set()
    for start, stop, step in N_SPACING:
        values.update(range(start, stop + 1, step))
    return sorted(values)


def generate_normalized_kl_list(
    stepsize: float, level_ratio: float, num_levels: int
) -> list[float]:
    """
    Ticks on [0, 1) that get denser toward 1.

    [0, 0.5) is spaced by stepsize, [0.5, 0.75) by stepsize / level_ratio,
    and each further interval of half the previous width uses one more
    division by level_ratio. After num_levels intervals the remainder up to
    1 keeps the last spacing.

    Raises:
        DomainError: If stepsize <= 0, level_ratio <= 1 or num_levels < 0
    """
    if stepsize <= 0:
        raise DomainError(f"stepsize must be positive, got {stepsize!r}")
    if level_ratio <= 1:
        raise DomainError(f"level_ratio must exceed 1, got {level_ratio!r}")
    if num_levels < 0:
        raise DomainError(f"num_levels must be nonnegative, got {num_levels!r}")

    ticks: list[float] = []
    for level in range(num_levels + 1):
        start = 1.0 - 0.5**level
        stop = 1.0 if level == num_levels else 1.0 - 0.5 ** (level + 1)
        step = stepsize / level_ratio ** max(0, min(level, num_levels - 1))
        count = math.ceil(round((stop - start) / step, TICK_DECIMALS))
        ticks.extend(round(start + i * step, TICK_DECIMALS) for i in range(count))
    return [tick for tick in ticks if tick < 1.0]


def _uniform_cells(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.full(t.shape + (2, 2), 0.25) + t[..., None, None] * PATH_DIRECTION


def _uniform_tau(t) -> np.ndarray:
    return mutual_information_cells(_uniform_cells(t))


def _uniform_kl(t, eta: float) -> np.ndarray:
    return kl_divergence_cells(_uniform_cells(t), reference_distribution(eta).cells)


def gamma_zero(N: int) -> float:
    """
    The threshold gamma_0(N) whose segment on the uniform path has length 1/N.

    The segment is symmetric about t = 0, so gamma_0 = tau(p0(1/(2N))).

    Raises:
        DomainError: If 1/N exceeds the path length 1/2
    """
    if N < 2:
        raise DomainError(f"gamma_0 needs N >= 2, got {N}")
    return float(_uniform_tau(1.0 / (2.0 * N)))


def zeta_ratio(t, eta: float):
    """KL(p0(t)||p^eta) / KL(p0||p^eta); 1 at t = 0 and 0 at t_eta^+."""
    if eta <= 0:
        raise DomainError("the normalized KL needs eta > 0")
    ratio = _uniform_kl(t, eta) / float(_uniform_kl(0.0, eta))
    return float(ratio) if np.ndim(ratio) == 0 else ratio


def gamma_for_normalized_kl(u, eta: float):
    """
    The gamma below eta whose table sits at normalized KL u.

    Inverts zeta on [0, t_eta^+] by bisection and returns tau at that t.

    Raises:
        DomainError: If u is outside [0, 1]
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any((u_arr < 0) | (u_arr > 1)):
        raise DomainError("normalized KL values must lie in [0, 1]")
    t_eta = reference_t(eta)
    t = bisect_increasing(
        lambda s: -zeta_ratio(s, eta),
        np.zeros_like(u_arr),
        np.full_like(u_arr, t_eta),
        -u_arr,
    )
    gamma = _uniform_tau(t)
    return float(gamma) if np.ndim(gamma) == 0 else gamma


def upper_side_gammas(eta: float, count: int = 10) -> np.ndarray:
    """
    count gammas above eta at evenly spaced KL up to KL(p0(1/4)||p^eta).

    Returns:
        Array of (gamma, kl) rows
    """
    if count < 1:
        raise DomainError(f"count must be positive, got {count}")
    t_eta = reference_t(eta)
    kls = np.linspace(0.0, float(_uniform_kl(T_END, eta)), count + 1)[1:]
    t = bisect_increasing(
        lambda s: _uniform_kl(s, eta),
        np.full_like(kls, t_eta),
        np.full_like(kls, T_END),
        kls,
    )
    t[-1] = T_END
    return np.column_stack([_uniform_tau(t), kls])


def kl_of_gamma(gamma: float, eta: float) -> tuple[str, float]:
    """The table side and KL(p^gamma||p^eta) for a level gamma."""
    gamma = min(max(gamma, 0.0), MAX_TAU)
    t = bisect_increasing(_uniform_tau, np.zeros(1), np.full(1, T_END), gamma)
    t_value = T_END if gamma >= MAX_TAU else float(t[0])
    side = LOWER if gamma <= eta else UPPER
    return side, float(_uniform_kl(t_value, eta))


@dataclass
class BetaTable:
    """
    Tabulated log beta values for one reference level eta.

    lower and upper hold (N, kl, log_beta) cells; gamma0 maps each N on the
    grid to its threshold. flagged lists (side, N, kl) cells whose Monte
    Carlo estimate did not reach the precision target.
    """

    eta: float
    gamma0: dict[int, float]
    lower: list[tuple[int, float, float]] = field(default_factory=list)
    upper: list[tuple[int, float, float]] = field(default_factory=list)
    flagged: list[tuple[str, int, float]] = field(default_factory=list)
    _rows: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _warned: set = field(default_factory=set, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.lower = sorted((int(n), float(k), float(v)) for n, k, v in self.lower)
        self.upper = sorted((int(n), float(k), float(v)) for n, k, v in self.upper)
        self.gamma0 = {int(n): float(g) for n, g in sorted(self.gamma0.items())}

    @property
    def n_grid(self) -> list[int]:
        return sorted(set(self.gamma0) | {c[0] for c in self.lower + self.upper})

    @property
    def is_empty(self) -> bool:
        return not self.lower and not self.upper

    def _row(self, side: str, N: int) -> tuple[np.ndarray, np.ndarray]:
        key = (side, N)
        if key not in self._rows:
            cells = [(k, v) for n, k, v in getattr(self, side) if n == N]
            if side == UPPER:
                cells += [(0.0, v) for n, k, v in self.lower if n == N and k == 0.0]
            cells.sort()
            kls = np.array([c[0] for c in cells])
            logs = np.array([c[1] for c in cells])
            self._rows[key] = (kls, logs)
        return self._rows[key]

    def row_value(self, side: str, N: int, kl: float) -> Optional[float]:
        """Linear interpolation in KL within one row; None if the row is empty."""
        kls, logs = self._row(side, N)
        if len(kls) == 0:
            return None
        if (kl < kls[0] or kl > kls[-1]) and (side, N) not in self._warned:
            self._warned.add((side, N))
            logger.warning(
                "KL %.6g outside the %s row at N=%d [%.6g, %.6g]; clamping",
                kl,
                side,
                N,
                kls[0],
                kls[-1],
            )
        return float(np.interp(kl, kls, logs))

    def save(self, path: Union[str, Path]) -> None:
        """Write the versioned text format; values use 17 significant digits."""
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"betatable {FORMAT_VERSION}\n")
            f.write(f"eta {self.eta:.17g}\n")
            f.write(f"gamma0 {len(self.gamma0)}\n")
            for n, g in self.gamma0.items():
                f.write(f"{n}\t{g:.17g}\n")
            for side in (LOWER, UPPER):
                cells = getattr(self, side)
                f.write(f"{side} {len(cells)}\n")
                for n, k, v in cells:
                    f.write(f"{n}\t{k:.17g}\t{v:.17g}\n")
            f.write(f"flagged {len(self.flagged)}\n")
            for side, n, k in self.flagged:
                f.write(f"{side}\t{n}\t{k:.17g}\n")

    def __str__(self) -> str:
        return (
            f"BetaTable(eta={self.eta:g}, {len(self.n_grid)} N values, "
            f"{len(self.lower)} lower cells, {len(self.upper)} upper cells)"
        )


class _LineReader:
    def __init__(self, path: Path) -> None:
        self.path = path
        self.lines = path.read_text(encoding="utf-8").splitlines()
        self.lineno = 0

    def next_fields(self) -> list[str]:
        if self.lineno >= len(self.lines):
            raise TableFormatError("unexpected end of file", self.path, self.lineno)
        line = self.lines[self.lineno]
        self.lineno += 1
        return line.split()

    def header(self, name: str) -> int:
        fields = self.next_fields()
        if len(fields) != 2 or fields[0] != name:
            raise self.error(f"expected '{name} <count>'")
        return self.number(fields[1], int)

    def number(self, text: str, kind=float):
        try:
            return kind(text)
        except ValueError:
            raise self.error(f"bad number {text!r}") from None

    def error(self, message: str) -> TableFormatError:
        return TableFormatError(message, self.path, self.lineno)


def load_table(path: Union[str, Path]) -> BetaTable:
    """
    Read a table written by BetaTable.save.

    Raises:
        TableFormatError: If the file is missing or malformed
    """
    path = Path(path)
    if not path.exists():
        raise TableFormatError("table file not found", path)
    reader = _LineReader(path)

    version = reader.next_fields()
    if version != ["betatable", str(FORMAT_VERSION)]:
        raise reader.error(f"expected 'betatable {FORMAT_VERSION}'")
    eta_fields = reader.next_fields()
    if len(eta_fields) != 2 or eta_fields[0] != "eta":
        raise reader.error("expected 'eta <value>'")
    eta = reader.number(eta_fields[1])

    gamma0: dict[int, float] = {}
    for _ in range(reader.header("gamma0")):
        fields = reader.next_fields()
        if len(fields) != 2:
            raise reader.error("expected 'N <gamma0>'")
        gamma0[reader.number(fields[0], int)] = reader.number(fields[1])

    sides: dict[str, list[tuple[int, float, float]]] = {}
    for side in (LOWER, UPPER):
        cells = []
        for _ in range(reader.header(side)):
            fields = reader.next_fields()
            if len(fields) != 3:
                raise reader.error("expected 'N <kl> <logbeta>'")
            n = reader.number(fields[0], int)
            cells.append((n, reader.number(fields[1]), reader.number(fields[2])))
        sides[side] = cells

    # files written before the flagged block existed end after the upper block
    flagged: list[tuple[str, int, float]] = []
    if reader.lineno < len(reader.lines):
        for _ in range(reader.header("flagged")):
            fields = reader.next_fields()
            if len(fields) != 3 or fields[0] not in (LOWER, UPPER):
                raise reader.error("expected '<side> N <kl>'")
            flagged.append(
                (fields[0], reader.number(fields[1], int), reader.number(fields[2]))
            )

    table = BetaTable(
        eta=eta,
        gamma0=gamma0,
        lower=sides[LOWER],
        upper=sides[UPPER],
        flagged=flagged,
    )
    logger.info("loaded %s from %s", table, path)
    if flagged:
        logger.warning("%d cells in %s did not converge", len(flagged), path)
    return table


def _enforce_monotone(
    cells: list[tuple[int, float, float]], decreasing: bool
) -> list[tuple[int, float, float]]:
    """Clamp log beta to <= 0 and make each row monotone in kl."""
    out = []
    for n in sorted({c[0] for c in cells}):
        row = sorted(c for c in cells if c[0] == n)
        logs = np.minimum(np.array([c[2] for c in row]), 0.0)
        if decreasing:
            logs = np.minimum.accumulate(logs)
        else:
            logs = np.maximum.accumulate(logs)
        out.extend((n, k, float(v)) for (_, k, _), v in zip(row, logs))
    return out


def _mc_cell(
    N: int, eta: float, gamma: float, params: McParams, seed: int
) -> tuple[float, bool]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        result = monte_carlo_integrate(IntegrandContext(eta, N, gamma), params, seed)
    return result.final_estimate, result.stopped_by_criterion


def _cell_plan(
    N: int, eta: float, lower_ticks: np.ndarray, upper: np.ndarray
) -> list[tuple[str, float, float]]:
    """(side, gamma, kl) cells kept for one N."""
    threshold = gamma_zero(N)
    kl0 = float(_uniform_kl(0.0, eta))
    plan = []
    for u, gamma in lower_ticks:
        if gamma >= threshold:
            plan.append((LOWER, float(gamma), float(u * kl0)))
    for gamma, kl in upper:
        if gamma >= threshold:
            plan.append((UPPER, float(gamma), float(kl)))
    side, kl = kl_of_gamma(threshold, eta)
    plan.append((side, threshold, kl))
    return plan


def build_table(
    eta: float,
    n_grid: Optional[Sequence[int]] = None,
    normalized_kl: Optional[Sequence[float]] = None,
    upper_points: int = 10,
    mc_params: Optional[McParams] = None,
    exact_cutoff: int = 200,
    seed: int = 0,
    workers: int = 1,
) -> BetaTable:
    """
    Compute a table of log beta values.

    Rows with N <= exact_cutoff come from the exact CDF; larger rows use the
    Monte Carlo estimator, one seed per cell. Every row also stores the cell
    at its own threshold gamma_0(N), so clamped lookups hit a tabulated value.

    Args:
        eta: Reference level, 0 < eta < ln 2
        n_grid: Sample sizes; defaults to generate_n_list()
        normalized_kl: Lower-side ticks; defaults to the (0.1, 2, 4) list
        upper_points: Number of upper-side KL points
        mc_params: Monte Carlo parameters for rows above the cutoff
        exact_cutoff: Largest N computed exactly
        seed: Base seed for Monte Carlo cells
        workers: Worker processes for exact rows and Monte Carlo cells

    Returns:
        The BetaTable; cells whose estimator ran out of budget are flagged
    """
    if eta <= 0:
        raise DomainError("tables need eta > 0")
    reference_distribution(eta)
    n_grid = sorted(set(n_grid or generate_n_list()))
    if n_grid[0] < 2:
        raise DomainError("table sample sizes must be at least 2")
    if normalized_kl is None:
        normalized_kl = generate_normalized_kl_list(0.1, 2.0, 4)
    params = mc_params or McParams()

    ticks = np.asarray(normalized_kl, dtype=float)
    lower_ticks = np.column_stack([ticks, gamma_for_normalized_kl(ticks, eta)])
    upper = upper_side_gammas(eta, upper_points)

    gamma0 = {n: gamma_zero(n) for n in n_grid}
    cells: dict[str, list[tuple[int, float, float]]] = {LOWER: [], UPPER: []}
    flagged: list[tuple[str, int, float]] = []

    mc_jobs = []
    for N in n_grid:
        plan = _cell_plan(N, eta, lower_ticks, upper)
        if N <= exact_cutoff:
            cdf = exact_beta_cdf_parallel(N, eta, modulus=max(1, workers))
            for side, gamma, kl in plan:
                cells[side].append((N, kl, math.log(cdf.cumulative_at(gamma))))
            logger.info("exact row N=%d: %d cells", N, len(plan))
        else:
            mc_jobs.extend((N, side, gamma, kl) for side, gamma, kl in plan)

    if mc_jobs:
        logger.info("estimating %d cells by Monte Carlo", len(mc_jobs))
        args = [
            (N, eta, gamma, params, seed + i)
            for i, (N, _, gamma, _) in enumerate(mc_jobs)
        ]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_mc_cell, *zip(*args)))
        else:
            results = [_mc_cell(*a) for a in args]
        for (N, side, _, kl), (estimate, converged) in zip(mc_jobs, results):
            if not converged:
                flagged.append((side, N, kl))
            if estimate <= 0:
                logger.warning("zero estimate at N=%d kl=%.6g; cell omitted", N, kl)
                flagged.append((side, N, kl))
                continue
            cells[side].append((N, kl, math.log(estimate)))

    for side, N, kl in flagged:
        logger.warning("cell %s N=%d kl=%.6g did not converge", side, N, kl)
    table = BetaTable(
        eta=eta,
        gamma0=gamma0,
        lower=_enforce_monotone(cells[LOWER], decreasing=True),
        upper=_enforce_monotone(cells[UPPER], decreasing=False),
        flagged=flagged,
    )
    logger.info("built %s", table)
    return table


def _value_on_row(table: BetaTable, N: int, side: str, kl: float) -> Optional[float]:
    value = table.row_value(side, N, kl)
    if value is None and side == UPPER:
        value = table.row_value(LOWER, N, 0.0)
    elif value is None:
        value = table.row_value(UPPER, N, 0.0)
    return value


def _interpolate_in_grid(table: BetaTable, N: int, gamma: float) -> float:
    grid = table.n_grid
    if N >= 2:
        gamma = max(gamma, gamma_zero(N))
    side, kl = kl_of_gamma(gamma, table.eta)

    i = int(np.searchsorted(grid, N))
    if grid[i] == N:
        bracket: Iterable[int] = (N,)
    else:
        bracket = (grid[i - 1], grid[i])
    values = [(n, _value_on_row(table, n, side, kl)) for n in bracket]
    values = [(n, v) for n, v in values if v is not None]
    if not values:
        raise DomainError(f"no tabulated cells near N={N}")
    if len(values) == 1:
        return min(values[0][1], 0.0)
    (n_lo, v_lo), (n_hi, v_hi) = values
    weight = (N - n_lo) / (n_hi - n_lo)
    return min(v_lo + weight * (v_hi - v_lo), 0.0)


def interpolate_log_beta(table: BetaTable, N: int, gamma: float) -> float:
    """
    log beta_N(max(gamma, gamma_0(N))) from the table.

    Below the grid the value is 0. Above it the two largest rows are
    extrapolated linearly in N.

    Raises:
        DomainError: If the table is empty or gamma is negative
    """
    if table.is_empty:
        raise DomainError("cannot interpolate in an empty table")
    if gamma < 0:
        raise DomainError(f"gamma must be nonnegative, got {gamma!r}")
    grid = table.n_grid
    if N < grid[0]:
        return 0.0
    if N > grid[-1]:
        if len(grid) < 2:
            return _interpolate_in_grid(table, grid[-1], gamma)
        largest, second = grid[-1], grid[-2]
        v_largest = _interpolate_in_grid(table, largest, gamma)
        v_second = _interpolate_in_grid(table, second, gamma)
        slope = (v_largest - v_second) / (largest - second)
        return min(v_largest + slope * (N - largest), 0.0)
    return _interpolate_in_grid(table, N, gamma)
