"""
Where the KL-closest equal-marginals table to p^eta sits.

The curve x -> H(p0(x) || p^eta) over equal-marginals product tables
p0(x) = (x, 1-x) x (x, 1-x) has a single minimum at x = 1/2 for small eta
and two symmetric minima for large eta. The minimum is unique while t_eta^+
stays below (1 - 1/e) / (4 (1 + 1/e)); the split into two minima happens
later, at t_eta^+ = tanh(1) / 4. threshold_scan counts critical points
across eta to locate it empirically.

For gamma > 0 the candidates sit on the tau = gamma boundary. Fixing both
marginals and tau leaves a single table on the side facing p^eta, so the
curve does not depend on how the boundary is reached. Its two minima meet
at x = 1/2 at merge_gamma(eta).
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import lambertw

from betaboost.errors import DomainError
from betaboost.simplex import (
    PATH_DIRECTION,
    fiber_t_bounds,
    kl_divergence_cells,
    mutual_information_cells,
    reference_distribution,
    reference_t,
)

logger = logging.getLogger(__name__)

MIN_RESOLUTION = 100
DEFAULT_RESOLUTION = 10_000
REFINE_TOLERANCE = 1e-10
POLISH_STEPS = 3

PRODUCT = "product"
FIBER_SHIFT = "fiber-shift"  # each p0(x) moved along its path to t_gamma^+


@dataclass(frozen=True)
class KlCurve:
    """
    Sampled KL curve with its detected local minima.

    construction names how the candidate table at x was built: "product"
    for gamma = 0, "fiber-shift" for gamma > 0.
    """

    eta: float
    gamma: float
    xs: np.ndarray
    kls: np.ndarray
    minima: list[tuple[float, float]] = field(default_factory=list)
    construction: str = PRODUCT

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.xs.tolist(), self.kls.tolist()))

    def __str__(self) -> str:
        where = ", ".join(f"x={x:.6f}" for x, _ in self.minima)
        return (
            f"eta={self.eta:g} gamma={self.gamma:g}: "
            f"{len(self.minima)} minima ({where}) [empirical, {self.construction}]"
        )


@dataclass(frozen=True)
class CriticalPoints:
    """Interior local minima and maxima of a curve."""

    minima: list[float]
    maxima: list[float]

    @property
    def count(self) -> int:
        return len(self.minima) + len(self.maxima)


def _products(xs: np.ndarray) -> np.ndarray:
    margins = np.stack([xs, 1.0 - xs], axis=-1)
    return margins[:, :, None] * margins[:, None, :]


def _curve_values(xs: np.ndarray, eta: float, gamma: float) -> np.ndarray:
    reference = reference_distribution(eta).cells
    cells = _products(np.asarray(xs, dtype=float))
    if gamma > 0:
        _, plus = fiber_t_bounds(cells, gamma)
        cells = cells + plus[:, None, None] * PATH_DIRECTION
    return kl_divergence_cells(cells, reference)


def _scalar_curve(eta: float, gamma: float):
    def value(x: float) -> float:
        return float(_curve_values(np.array([x]), eta, gamma)[0])

    return value


def _sign_changes(kls: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    diffs = np.diff(kls)
    falling, rising = diffs[:-1], diffs[1:]
    minima = np.nonzero((falling < 0) & (rising >= 0))[0] + 1
    maxima = np.nonzero((falling > 0) & (rising <= 0))[0] + 1
    return minima, maxima


def _refine(func, xs: np.ndarray, i: int) -> float:
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    result = minimize_scalar(
        func, bounds=(lo, hi), method="bounded", options={"xatol": REFINE_TOLERANCE}
    )
    return float(result.x)


def kl_curve(
    eta: float, gamma: float = 0.0, resolution: int = DEFAULT_RESOLUTION
) -> KlCurve:
    """
    Sample H(q(x) || p^eta) on x_i = i / (resolution + 1) and locate its minima.

    For gamma = 0, q(x) = p0(x). For gamma > 0, q(x) is p0(x) moved along its
    fixed-marginal path to t_gamma^+, the boundary point of tau <= gamma on
    the side facing p^eta.

    Raises:
        DomainError: If gamma < 0, resolution < 100 or eta is not realizable
    """
    if gamma < 0:
        raise DomainError(f"gamma must be nonnegative, got {gamma!r}")
    if resolution < MIN_RESOLUTION:
        raise DomainError(f"resolution must be at least {MIN_RESOLUTION}")
    xs = np.arange(1, resolution + 1) / (resolution + 1)
    kls = _curve_values(xs, eta, gamma)
    func = _scalar_curve(eta, gamma)
    minima = []
    for i in _sign_changes(kls)[0]:
        x = _refine(func, xs, int(i))
        minima.append((x, func(x)))
    curve = KlCurve(
        eta=eta,
        gamma=gamma,
        xs=xs,
        kls=kls,
        minima=minima,
        construction=FIBER_SHIFT if gamma > 0 else PRODUCT,
    )
    logger.debug("%s", curve)
    return curve


def critical_points(curve: KlCurve) -> CriticalPoints:
    """Refined locations of the curve's interior minima and maxima."""
    func = _scalar_curve(curve.eta, curve.gamma)
    min_idx, max_idx = _sign_changes(curve.kls)
    minima = [_refine(func, curve.xs, int(i)) for i in min_idx]
    maxima = [_refine(lambda x: -func(x), curve.xs, int(i)) for i in max_idx]
    return CriticalPoints(minima, maxima)


def _polish(y: float, log_z: float) -> float:
    for _ in range(POLISH_STEPS):
        slope = 1.0 / y + log_z
        if abs(slope) < 1e-8:
            break
        y -= (math.log(y) + (y - 1.0) * log_z) / slope
    return y


def yz_solutions(z: float) -> tuple[float, float]:
    """
    Both real solutions y of log y + y log z - log z = 0.

    y = W(z log z) / log z on the principal and lower Lambert branches. One
    of the two is always 1; at z = 1/e they coincide.

    Returns:
        (principal-branch solution, lower-branch solution)

    Raises:
        DomainError: If z is outside (0, 1)
    """
    if not (0.0 < z < 1.0):
        raise DomainError(f"need 0 < z < 1, got {z!r}")
    log_z = math.log(z)
    argument = max(z * log_z, -1.0 / math.e)
    principal = float(lambertw(argument, 0).real) / log_z
    lower = float(lambertw(argument, -1).real) / log_z
    return _polish(principal, log_z), _polish(lower, log_z)


def yz_residual(y: float, z: float) -> float:
    """log y + y log z - log z."""
    return math.log(y) + y * math.log(z) - math.log(z)


def conjecture_threshold() -> tuple[float, float]:
    """
    t0 = (1 - 1/e) / (4 (1 + 1/e)) and eta0 = tau(p0(t0)).

    Below eta0 the gamma = 0 curve has a single minimum at x = 1/2.
    """
    inv_e = math.exp(-1.0)
    t0 = (1.0 - inv_e) / (4.0 * (1.0 + inv_e))
    return t0, _uniform_tau(t0)


def curvature_threshold() -> tuple[float, float]:
    """
    Where the gamma = 0 curve changes from one critical point to three.

    The second x-derivative of H(p0(x) || p0(t)) at x = 1/2 is
    8 - 4 log((1/4 + t) / (1/4 - t)), which vanishes at t = tanh(1) / 4.
    This lies above t0, so the single-minimum region contains t < t0.
    """
    t_star = math.tanh(1.0) / 4.0
    return t_star, _uniform_tau(t_star)


def merge_gamma(eta: float) -> float:
    """
    Smallest gamma at which the shifted curve has a single minimum at 1/2.

    With u = 4 t_gamma^+ and U = 4 t_eta^+, the curvature at x = 1/2 has
    the sign of l(u) (1 + u) - u l(U), where l(v) = log((1 + v) / (1 - v)).
    It is negative for small u exactly when l(U) > 2 and turns positive at
    one root in (0, U).

    Returns:
        tau at the root, or 0.0 when the gamma = 0 curve is already unsplit

    Raises:
        DomainError: If eta is not realizable
    """
    big = 4.0 * reference_t(eta)
    log_ratio = 2.0 * math.atanh(big)
    if log_ratio <= 2.0:
        return 0.0

    def excess(u: float) -> float:
        return 2.0 * math.atanh(u) * (1.0 + u) / u - log_ratio

    u = brentq(excess, 1e-9, big, xtol=REFINE_TOLERANCE)
    gamma = _uniform_tau(u / 4.0)
    logger.debug("eta=%g: minima merge at gamma=%.6g", eta, gamma)
    return gamma


def _uniform_tau(t: float) -> float:
    return float(mutual_information_cells(np.full((2, 2), 0.25) + t * PATH_DIRECTION))


def _scan_one(eta: float, gamma: float, resolution: int) -> tuple[float, int, int]:
    points = critical_points(kl_curve(eta, gamma, resolution))
    return eta, len(points.minima), len(points.maxima)


def threshold_scan(
    etas: Sequence[float],
    resolution: int = 2000,
    gamma: float = 0.0,
    workers: int = 1,
) -> list[tuple[float, int, int]]:
    """
    (eta, minima count, maxima count) for each eta, in input order.

    Args:
        etas: Reference levels to scan
        resolution: Grid points per curve
        gamma: Level of the constraint set
        workers: Process count; 1 scans in-process
    """
    etas = [float(e) for e in etas]
    if workers <= 1:
        rows = [_scan_one(e, gamma, resolution) for e in etas]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(
                pool.map(
                    _scan_one, etas, [gamma] * len(etas), [resolution] * len(etas)
                )
            )
    logger.info("scanned %d eta values at gamma=%g", len(rows), gamma)
    return rows
