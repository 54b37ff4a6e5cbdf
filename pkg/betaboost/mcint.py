"""
Monte Carlo estimation of beta values for 2x2 tables.

The lattice sum defining beta is replaced by N^3 times the integral of a
continuous Robbins-type extension of the multinomial probability over the
region tau <= gamma. The integral is estimated by importance sampling in
the coordinates (p_A, p_B, t), where t moves along the path of tables that
share the marginals (p_A, p_B). Sampling stops once the estimated relative
precision reaches the requested level at the requested confidence.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from betaboost.config import McParams
from betaboost.errors import ConvergenceWarning, DomainError
from betaboost.simplex import (
    ZERO_CELL,
    ContingencyTable,
    fiber_t_bounds,
    kl_divergence_cells,
    reference_distribution,
)
from betaboost.typespace import emission_probability

logger = logging.getLogger(__name__)

ONE_SIGMA_MASS = 0.6826894921
RHO = math.exp(-0.5)  # Z(1) / Z(0) for a standard Gaussian
SCAN_POINTS = 1000
T_TOLERANCE = 1e-12
DIMENSION = 3  # free coordinates of a 2x2 table

RatioSampler = Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class IntegrandContext:
    """Reference level eta, sample size N and test level gamma for 2x2 tables."""

    eta: float
    N: int
    gamma: float
    k: int = 2
    l: int = 2  # noqa: E741

    def __post_init__(self) -> None:
        if (self.k, self.l) != (2, 2):
            raise DomainError("Monte Carlo integration is defined for 2x2 tables")
        if self.N < 1:
            raise DomainError(f"N must be positive, got {self.N}")
        if not (0.0 <= self.eta < math.log(2)):
            raise DomainError(f"eta={self.eta!r} not realizable")
        if self.gamma < 0:
            raise DomainError(f"gamma must be nonnegative, got {self.gamma!r}")

    @property
    def reference(self) -> np.ndarray:
        return reference_distribution(self.eta).cells


@dataclass(frozen=True)
class SamplingPlan:
    """Scales of the Gaussian proposal over (p_A, p_B, t)."""

    marginal_scale: float
    t_center: float
    t_scale: float
    scale_ratio: float

    def __post_init__(self) -> None:
        if self.marginal_scale <= 0 or self.t_scale <= 0 or self.scale_ratio <= 0:
            raise DomainError(f"sampling scales must be positive: {self}")


@dataclass
class McResult:
    """Outcome of a Monte Carlo run, with its recorded running estimates."""

    final_estimate: float
    stopped_by_criterion: bool
    num_iterations: int
    iterations: list[tuple[int, float]] = field(default_factory=list)

    def relative_error(self, reference: float) -> float:
        return abs(self.final_estimate - reference) / reference

    def trace_rows(self) -> list[tuple[int, float]]:
        return list(self.iterations)

    def __str__(self) -> str:
        stop = "criterion" if self.stopped_by_criterion else "budget"
        return (
            f"McResult(estimate={self.final_estimate:.6g}, "
            f"iterations={self.num_iterations}, stopped by {stop})"
        )


def chernoff_radius(central_probability: float, N: int) -> float:
    """Standard deviation t_N = sqrt(-log(1 - cp) / N) of the marginal proposal."""
    if not (0.0 < central_probability < 1.0):
        raise DomainError("central probability must lie in (0, 1)")
    if N < 1:
        raise DomainError(f"N must be positive, got {N}")
    return math.sqrt(-math.log(1.0 - central_probability) / N)


def t_confidence(confidence: float) -> float:
    """Two-sided standard normal quantile for the given confidence."""
    if not (0.0 < confidence < 1.0):
        raise DomainError(f"confidence must lie in (0, 1), got {confidence!r}")
    return float(norm.isf((1.0 - confidence) / 2.0))


def stopping_constant(precision_percent: float, confidence: float) -> float:
    """K = (t_conf * 100 / precision_percent)^2."""
    if precision_percent <= 0:
        raise DomainError("precision_percent must be positive")
    return (t_confidence(confidence) * 100.0 / precision_percent) ** 2


def coord_map(p_a, p_b, t) -> np.ndarray:
    """
    Map (p_A, p_B, t) to the 2x2 cells [[p_A p_B + t, (1-p_A) p_B - t],
    [p_A (1-p_B) - t, rest]].

    Inputs broadcast; the result has shape (..., 2, 2). Cells can fall
    outside [0, 1]; check with is_valid_table.
    """
    a, b, t = np.broadcast_arrays(
        np.asarray(p_a, dtype=float),
        np.asarray(p_b, dtype=float),
        np.asarray(t, dtype=float),
    )
    c00 = a * b + t
    c01 = (1.0 - a) * b - t
    c10 = a * (1.0 - b) - t
    c11 = 1.0 - c00 - c01 - c10
    return np.stack([np.stack([c00, c01], -1), np.stack([c10, c11], -1)], -2)


def coord_unmap(q: Union[ContingencyTable, np.ndarray]):
    """Inverse of coord_map: (p00 + p10, p00 + p01, p00 - p_A p_B)."""
    cells = q.cells if isinstance(q, ContingencyTable) else np.asarray(q, float)
    p_a = cells[..., 0, 0] + cells[..., 1, 0]
    p_b = cells[..., 0, 0] + cells[..., 0, 1]
    return p_a, p_b, cells[..., 0, 0] - p_a * p_b


def is_valid_table(cells: np.ndarray) -> np.ndarray:
    """Whether every cell of each stacked table lies in [0, 1]."""
    cells = np.asarray(cells, dtype=float)
    return np.all((cells >= 0.0) & (cells <= 1.0), axis=(-2, -1))


def robbins_log_integrand_cells(
    cells: np.ndarray, reference: np.ndarray, N: int
) -> np.ndarray:
    """
    log of exp(-N H(q||p)) (2 pi N)^(-3/2) prod(q)^(-1/2) for stacked tables.

    Tables with a zero or negative cell get -inf.
    """
    cells = np.asarray(cells, dtype=float)
    positive = np.all(cells > ZERO_CELL, axis=(-2, -1))
    safe = np.where(positive[..., None, None], cells, 0.25)
    log_value = (
        -N * kl_divergence_cells(safe, reference)
        - 0.5 * DIMENSION * math.log(2.0 * math.pi * N)
        - 0.5 * np.log(safe).sum(axis=(-2, -1))
    )
    return np.where(positive, log_value, -np.inf)


def robbins_integrand(q: ContingencyTable, ctx: IntegrandContext) -> float:
    """
    The continuous extension of Pr_p(T) at the table q.

    Positive tables use the Robbins form. Tables with a zero cell take the
    exact multinomial probability when N q is a lattice point, else 0.
    """
    cells = q.cells
    if np.all(cells > ZERO_CELL):
        return float(np.exp(robbins_log_integrand_cells(cells, ctx.reference, ctx.N)))
    scaled = cells.ravel() * ctx.N
    counts = np.rint(scaled)
    if np.max(np.abs(scaled - counts)) > 1e-9:
        return 0.0
    return emission_probability(counts.astype(int).tolist(), ctx.reference.ravel())


def _log_f_uniform(t: np.ndarray, reference: np.ndarray, N: int) -> np.ndarray:
    """log f_N(t) = -N H(p0(t)||p^eta) - 1/2 sum log p0(t) on the uniform path."""
    cells = coord_map(0.5, 0.5, t)
    with np.errstate(divide="ignore"):
        return -N * kl_divergence_cells(cells, reference) - 0.5 * np.log(
            np.clip(cells, 0.0, None)
        ).sum(axis=(-2, -1))


def t_sampling_scale(
    ctx: IntegrandContext, central_probability: float = ONE_SIGMA_MASS
) -> SamplingPlan:
    """
    Proposal scales for the context.

    On the uniform-marginals path, t_N is the last point left of t_gamma^+
    with f_N(t_N) / f_N(t_gamma^+) = exp(-1/2). When f_N(t_gamma^-) already
    exceeds that ratio, t_N = t_gamma^-. The t-scale on any fiber is
    (t_gamma^+ - t_N) / l_gamma times that fiber's length.

    Raises:
        DomainError: If gamma is zero (the region has no length)
    """
    reference = ctx.reference
    base = coord_map(0.5, 0.5, 0.0)[None]
    t_minus_arr, t_plus_arr = fiber_t_bounds(base, ctx.gamma)
    t_minus, t_plus = float(t_minus_arr[0]), float(t_plus_arr[0])
    length = t_plus - t_minus
    if length <= 0:
        raise DomainError(f"gamma={ctx.gamma!r} leaves no room on the path")

    log_top = float(_log_f_uniform(np.array(t_plus), reference, ctx.N))
    log_rho = math.log(RHO)

    def gap(t):
        return float(_log_f_uniform(np.array(t), reference, ctx.N)) - log_top - log_rho

    grid = np.linspace(t_minus, t_plus, SCAN_POINTS + 1)
    with np.errstate(invalid="ignore"):
        values = _log_f_uniform(grid, reference, ctx.N) - log_top - log_rho
    below = np.nonzero(values[:-1] <= 0.0)[0]
    if values[0] > 0.0 or len(below) == 0:
        t_n = t_minus
    else:
        i = int(below[-1])
        t_n = brentq(gap, grid[i], grid[i + 1], xtol=T_TOLERANCE)

    ratio = (t_plus - t_n) / length
    logger.debug(
        "sampling plan N=%d gamma=%.6g: t+=%.6g t_N=%.6g ratio=%.6g",
        ctx.N,
        ctx.gamma,
        t_plus,
        t_n,
        ratio,
    )
    return SamplingPlan(
        marginal_scale=chernoff_radius(central_probability, ctx.N),
        t_center=t_plus,
        t_scale=ratio * length,
        scale_ratio=ratio,
    )


def beta_ratio_sampler(ctx: IntegrandContext, plan: SamplingPlan) -> RatioSampler:
    """
    Build a sampler of integrand-to-density ratios for beta_N(gamma).

    Marginals are drawn from N(1/2, t_N^2). On the fiber of the drawn
    marginals, t is drawn from a Gaussian centred at that fiber's t_gamma^+
    with scale_ratio times the fiber length as deviation. Draws outside the
    simplex or outside tau <= gamma (t outside [t_gamma^-, t_gamma^+])
    contribute 0.
    """
    reference = ctx.reference
    sigma = plan.marginal_scale

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        p_a = rng.normal(0.5, sigma, size)
        p_b = rng.normal(0.5, sigma, size)
        z = rng.standard_normal(size)
        ratios = np.zeros(size)

        ok = (p_a > 0.0) & (p_a < 1.0) & (p_b > 0.0) & (p_b < 1.0)
        if not np.any(ok):
            return ratios
        a, b, z = p_a[ok], p_b[ok], z[ok]
        t_minus, t_plus = fiber_t_bounds(coord_map(a, b, 0.0), ctx.gamma)
        scale = plan.scale_ratio * (t_plus - t_minus)
        live = scale > 0
        t = t_plus + scale * z
        inside = live & (t >= t_minus) & (t <= t_plus)

        log_f = robbins_log_integrand_cells(coord_map(a, b, t), reference, ctx.N)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_density = (
                norm.logpdf(a, 0.5, sigma)
                + norm.logpdf(b, 0.5, sigma)
                + norm.logpdf(t, t_plus, np.where(live, scale, 1.0))
            )
            values = np.where(inside, np.exp(log_f - log_density), 0.0)
        ratios[ok] = np.nan_to_num(values, nan=0.0, posinf=0.0)
        return ratios

    return draw


def _draw_chunk(
    sampler: RatioSampler, rng: np.random.Generator, size: int, batch_size: int
) -> np.ndarray:
    parts = []
    remaining = size
    while remaining > 0:
        step = min(batch_size, remaining)
        parts.append(sampler(rng, step))
        remaining -= step
    return np.concatenate(parts) if parts else np.empty(0)


def monte_carlo_integrate(
    target: Union[IntegrandContext, RatioSampler],
    params: Optional[McParams] = None,
    seed: int = 0,
    plan: Optional[SamplingPlan] = None,
) -> McResult:
    """
    Average integrand-to-density ratios until the precision criterion fires.

    Every record_freq iterations the running mean is recorded. Every
    stop_check_freq iterations, with I the mean ratio and F the mean squared
    ratio, sampling stops once iterations >= K (F / I^2 - 1).

    Args:
        target: A beta context (estimate is scaled by N^3) or a ratio sampler
        params: Monte Carlo parameters, defaults if None
        seed: Seed for numpy's PCG64 generator
        plan: Precomputed sampling plan for a beta context

    Returns:
        McResult; stopped_by_criterion is False if the budget ran out
    """
    params = params or McParams()
    counts = (params.max_iterations, params.record_freq, params.stop_check_freq)
    if min(counts) < 1:
        raise DomainError("iteration counts must be positive")
    K = stopping_constant(params.precision_percent, params.confidence)

    if isinstance(target, IntegrandContext):
        if plan is None:
            plan = t_sampling_scale(target, params.central_probability)
        sampler = beta_ratio_sampler(target, plan)
        scale = float(target.N) ** DIMENSION
    else:
        sampler = target
        scale = 1.0

    rng = np.random.default_rng(seed)
    chunk = math.gcd(params.record_freq, params.stop_check_freq)
    total = 0.0
    total_sq = 0.0
    it = 0
    trace: list[tuple[int, float]] = []
    stopped = False

    while it < params.max_iterations:
        size = min(chunk, params.max_iterations - it)
        ratios = _draw_chunk(sampler, rng, size, params.batch_size)
        total += float(ratios.sum())
        total_sq += float(np.square(ratios).sum())
        it += size
        if it % params.record_freq == 0 or it == params.max_iterations:
            trace.append((it, scale * total / it))
        if it % params.stop_check_freq == 0:
            mean = total / it
            if mean > 0 and it >= K * (total_sq / it / mean**2 - 1.0):
                stopped = True
                break

    estimate = scale * total / it
    if not stopped:
        logger.warning("Monte Carlo budget of %d iterations exhausted", it)
        warnings.warn(
            f"stopped after {it} iterations without reaching the precision target",
            ConvergenceWarning,
            stacklevel=2,
        )
    else:
        logger.debug("criterion fired after %d iterations", it)
    return McResult(
        final_estimate=estimate,
        stopped_by_criterion=stopped,
        num_iterations=it,
        iterations=trace,
    )


def estimate_beta(
    N: int,
    eta: float,
    gamma: float,
    params: Optional[McParams] = None,
    seed: int = 0,
) -> float:
    """Monte Carlo estimate of beta_N^{p^eta}(gamma)."""
    result = monte_carlo_integrate(IntegrandContext(eta, N, gamma), params, seed)
    return result.final_estimate
