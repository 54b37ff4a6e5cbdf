"""
Closed-form sample-size and tail-bound calculators.

The transformed Lambert function W(x) = -W_{-1}(-x), the concentration
exponents F and F-tilde with the tail functions built on them, sample sizes
for p log p and log-likelihood estimates, Sanov-side bounds on log beta and
the lists of lower bounds on N that make the score pick the right structure.
"""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from scipy.optimize import brentq

from betaboost.errors import DomainError
from betaboost.simplex import t_gamma_plus, uniform_path

logger = logging.getLogger(__name__)

K1 = 3 * 64 * (1 + math.log(2)) ** 2
PLOGP_CONSTANT = 3 * (1 + math.log(2)) ** 2
LOG24 = math.log(24.0)
X_CARD = 4
W_TOLERANCE = 1e-15
MAX_DELTA = 8 / math.e  # largest gap with Delta/8 in the domain of W
BRENTQ_MIN_RTOL = 4 * sys.float_info.epsilon  # smallest rtol scipy brentq accepts
FIXED_POINT_MAX_ITER = 200


def script_w_log(log_x: float) -> float:
    """
    W evaluated from log(x), for arguments too small to represent.

    Solves y - log(y) = -log(x) for y >= 1.

    Raises:
        DomainError: If log(x) > -1, i.e. x > 1/e
    """
    if log_x > -1.0 + 1e-15:
        if log_x > -1.0 + 1e-12:
            raise DomainError(f"W needs 0 < x <= 1/e, got log(x)={log_x!r}")
        return 1.0
    target = -log_x

    def gap(y: float) -> float:
        return y - math.log(y) - target

    # y - log(y) >= y / 2 for all y > 0, so 2 * target brackets the root.
    return brentq(
        gap, 1.0, max(2.0 * target, 2.0), xtol=W_TOLERANCE, rtol=BRENTQ_MIN_RTOL
    )


def script_w(x: float) -> float:
    """
    W(x) = -W_{-1}(-x): the root y >= 1 of y exp(-y) = x.

    Raises:
        DomainError: If x is outside (0, 1/e]
    """
    if not (0.0 < x <= 1.0 / math.e + 1e-15):
        raise DomainError(f"W needs 0 < x <= 1/e, got {x!r}")
    return script_w_log(min(math.log(x), -1.0))


def _check_gap(delta_arg: float) -> None:
    if not (0.0 < delta_arg <= MAX_DELTA):
        raise DomainError(f"need 0 < Delta <= 8/e, got {delta_arg!r}")


def f_tilde(delta_arg: float, exp_w: bool = True) -> float:
    """
    F-tilde(Delta) = min[Delta^2 / K1, 1 / (12 exp W(Delta / 8))].

    exp_w=False selects the 1 / (12 W(Delta / 8)) reading.
    """
    _check_gap(delta_arg)
    w = script_w(delta_arg / 8.0)
    second = math.exp(-w) / 12.0 if exp_w else 1.0 / (12.0 * w)
    return min(delta_arg**2 / K1, second)


def f(delta_arg: float, exp_w: bool = True) -> float:
    """F(Delta) = min(1/24, F-tilde(Delta))."""
    return min(1.0 / 24.0, f_tilde(delta_arg, exp_w))


def script_f_n(N: float, delta_arg: float, exp_w: bool = True) -> float:
    """24 exp(-N F(Delta)), the tail bound on |tau(Y_N) - tau(p)| >= Delta."""
    if N < 1:
        raise DomainError(f"N must be at least 1, got {N!r}")
    return 24.0 * math.exp(-N * f(delta_arg, exp_w))


def script_f_n_tilde(N: float, delta_arg: float, exp_w: bool = True) -> float:
    """24 exp(-N F-tilde(Delta))."""
    if N < 1:
        raise DomainError(f"N must be at least 1, got {N!r}")
    return 24.0 * math.exp(-N * f_tilde(delta_arg, exp_w))


def script_f_n_tilde_inverse(N: float, gamma_bound: float, exp_w: bool = True) -> float:
    """
    The Delta with 24 exp(-N F-tilde(Delta)) = gamma_bound.

    F-tilde is increasing, so the solution is unique. When the quadratic
    branch is active it is closed form; otherwise it is found by root finding
    on [sqrt(K1 F), 8/e].

    Raises:
        DomainError: If gamma_bound is not attained for this N
    """
    if not (0.0 < gamma_bound < 24.0):
        raise DomainError(f"need 0 < Gamma < 24, got {gamma_bound!r}")
    target = (LOG24 - math.log(gamma_bound)) / N
    if target > f_tilde(MAX_DELTA, exp_w):
        raise DomainError(f"Gamma={gamma_bound!r} is below the range at N={N!r}")
    quadratic = math.sqrt(target * K1)
    if quadratic <= MAX_DELTA and f_tilde(quadratic, exp_w) >= target * (1 - 1e-15):
        return quadratic
    return brentq(
        lambda d: f_tilde(d, exp_w) - target,
        min(quadratic, MAX_DELTA),
        MAX_DELTA,
        xtol=1e-15,
        rtol=BRENTQ_MIN_RTOL,
    )


def g_delta(delta_arg: float, N: float, exp_w: bool = True) -> float:
    """script_f_n with index and argument swapped; decreasing in N."""
    return script_f_n(N, delta_arg, exp_w)


def g_delta_inverse(delta_arg: float, gamma_bound: float, exp_w: bool = True) -> float:
    """(log 24 - log Gamma) / F(Delta)."""
    if gamma_bound <= 0:
        raise DomainError(f"Gamma must be positive, got {gamma_bound!r}")
    return (LOG24 - math.log(gamma_bound)) / f(delta_arg, exp_w)


def g_delta_tilde_inverse(
    delta_arg: float, gamma_bound: float, exp_w: bool = True
) -> float:
    """(log 24 - log Gamma) / F-tilde(Delta)."""
    if gamma_bound <= 0:
        raise DomainError(f"Gamma must be positive, got {gamma_bound!r}")
    return (LOG24 - math.log(gamma_bound)) / f_tilde(delta_arg, exp_w)


def n_plogp(epsilon: float, delta: float) -> float:
    """
    Samples after which |p~ log p~ - p log p| >= epsilon has probability <= delta.

    max[3 (1 + log 2)^2 / eps^2, 24, 12 exp W(eps)] log(3 / delta).
    """
    if not (0.0 < epsilon < 1.0 / math.e):
        raise DomainError(f"need 0 < epsilon < 1/e, got {epsilon!r}")
    if not (0.0 < delta < 1.0):
        raise DomainError(f"need 0 < delta < 1, got {delta!r}")
    lead = max(PLOGP_CONSTANT / epsilon**2, 24.0, 12.0 * math.exp(script_w(epsilon)))
    return lead * math.log(3.0 / delta)


def n_sub_n(epsilon: float, delta: float, n: int, d: int) -> float:
    """
    Samples after which every family log likelihood is within N epsilon.

    Raises:
        DomainError: If n <= 2d + 1 or epsilon / (n 2^(d+2)) exceeds 1/e
    """
    if n <= 2 * d + 1:
        raise DomainError(f"need n > 2d + 1, got n={n}, d={d}")
    if epsilon <= 0 or not (0.0 < delta < 1.0):
        raise DomainError("need epsilon > 0 and 0 < delta < 1")
    scale = n * 2 ** (d + 2)
    lead = max(
        PLOGP_CONSTANT * 4 ** (d + 2) * n**2 / epsilon**2,
        24.0,
        12.0 * math.exp(script_w(epsilon / scale)),
    )
    count = 3 * 2 ** (d + 1) * math.comb(n, d + 1) * (n - d)
    return lead * math.log(count / (delta * (n - (2 * d + 1))))


def gamma_max(N: float, mu: float, eta: float, exp_w: bool = True) -> float:
    """F(mu eta) - log(24) / N; positive once N > log 24 / F(mu eta)."""
    if N < 1:
        raise DomainError(f"N must be at least 1, got {N!r}")
    return f(mu * eta, exp_w) - LOG24 / N


def kappa_prime(kappa: float, N: float, x_card: int = X_CARD) -> float:
    """kappa - |X| log((N + 1) / N) / log N."""
    if N <= 1:
        raise DomainError(f"kappa' needs N > 1, got {N!r}")
    return kappa - x_card * math.log((N + 1) / N) / math.log(N)


def eta_n_minus(
    N: float, eta: float, kappa_prime_value: float, x_card: int = X_CARD
) -> float:
    """
    The level below which the Sanov bound guarantees a nonnegative score gap.

    ((-sqrt(y) + sqrt(25 y - 2400 (|X| - kappa') log(N) / N)) / 48)^2 with
    y = eta / (2 eta + 1); tends to y / 144.

    Raises:
        DomainError: If the radicand is not positive or the root is not positive
    """
    if N <= 1 or eta <= 0:
        raise DomainError("need N > 1 and eta > 0")
    y = eta / (2 * eta + 1)
    radicand = 25 * y - 2400 * (x_card - kappa_prime_value) * math.log(N) / N
    if radicand <= 0:
        raise DomainError(
            f"radicand {radicand:.3g} <= 0: need log(N)/N < "
            "eta / (96 (2 eta + 1) (|X| - kappa'))"
        )
    root = -math.sqrt(y) + math.sqrt(radicand)
    if root <= 0:
        raise DomainError(f"N={N!r} too small for a positive eta_N^-")
    return (root / 48.0) ** 2


def sanov_log_beta_bound(
    N: int, eta: float, gamma: float, x_card: int = X_CARD
) -> float:
    """|X| log(N + 1) - (2/25) (t_eta^+ - t_gamma^+)^2 N, for 0 < gamma < eta."""
    if not (0.0 < gamma < eta):
        raise DomainError(f"need 0 < gamma < eta, got gamma={gamma!r}, eta={eta!r}")
    path = uniform_path()
    gap = t_gamma_plus(path, eta) - t_gamma_plus(path, gamma)
    return x_card * math.log(N + 1) - (2.0 / 25.0) * gap**2 * N


def sanov_log_beta_bound_refined(
    N: int, eta: float, gamma: float, x_card: int = X_CARD
) -> float:
    """
    |X| log(N + 1) - (1/25) ((1/2) sqrt(y) - sqrt(gamma))^2 N, y = eta/(2 eta + 1).

    Raises:
        DomainError: Unless 0 < gamma <= eta / (4 (2 eta + 1))
    """
    y = eta / (2 * eta + 1)
    if not (0.0 < gamma <= y / 4.0):
        raise DomainError(f"need 0 < gamma <= eta/(4(2 eta + 1)), got {gamma!r}")
    gap = 0.5 * math.sqrt(y) - math.sqrt(gamma)
    return x_card * math.log(N + 1) - gap**2 * N / 25


def plogp_positive_deviation_bound(N: float, epsilon: float) -> float:
    """5 exp(-N eps^2 / 18)."""
    return 5.0 * math.exp(-N * epsilon**2 / 18.0)


class Theorem(Enum):
    """Sample-size statements with their lists of lower bounds."""

    TWO_NODE = "two-node"
    TWO_NODE_INDEPENDENT_CHERNOFF = "two-node-independent-chernoff"
    TWO_NODE_INDEPENDENT_SANOV = "two-node-independent-sanov"
    TWO_NODE_COMBINED = "two-node-combined"
    N_NODE_TOLERANCE = "n-node-tolerance"
    N_NODE_SKELETON = "n-node-skeleton"
    N_NODE_SANOV = "n-node-sanov"


@dataclass(frozen=True)
class BoundParams:
    """
    Problem parameters and hyperparameters of the sample-size statements.

    num_edges and num_params default to the in-degree bounds n d and n 2^d.
    """

    epsilon: float = 0.1
    eta: float = 0.05
    delta: float = 0.05
    zeta: float = 0.01
    kappa: float = 0.5
    lam: float = 1e-5  # must stay below F(mu eta) / eta
    mu: float = 0.5
    theta: float = 0.5
    big_theta: float = 0.5
    n: int = 10
    d: int = 2
    L: int = 1
    m: float = 4.0
    m_hat: float = 4.0
    x_card: int = X_CARD
    num_edges: Optional[int] = None
    num_params: Optional[int] = None
    exp_w: bool = True

    def __post_init__(self) -> None:
        for name in ("lam", "mu", "theta", "big_theta", "delta"):
            value = getattr(self, name)
            if not (0.0 < value < 1.0):
                raise DomainError(f"{name} must lie in (0, 1), got {value!r}")
        if self.kappa <= 0:
            raise DomainError(f"kappa must be positive, got {self.kappa!r}")
        if self.epsilon <= 0 or self.eta <= 0 or self.zeta <= 0:
            raise DomainError("epsilon, eta and zeta must be positive")
        if self.m < 1 or self.m_hat < 1:
            raise DomainError("m and m_hat must be at least 1")
        if self.L < 1 or self.n < 2 or self.d < 0:
            raise DomainError("need L >= 1, n >= 2, d >= 0")

    @property
    def gap(self) -> float:
        """Delta = epsilon - eta."""
        return self.epsilon - self.eta

    @property
    def edge_count(self) -> int:
        return self.num_edges if self.num_edges is not None else self.n * self.d

    @property
    def param_count(self) -> int:
        return self.num_params if self.num_params is not None else self.n * 2**self.d

    @property
    def separating_count(self) -> int:
        """Number of distinct separating sets, C(n, d)."""
        return math.comb(self.n, self.d)

    @property
    def separating_size(self) -> int:
        return self.d


def _require_gap(p: BoundParams) -> float:
    if p.gap <= 0:
        raise DomainError(f"need eta < epsilon, got eta={p.eta!r}, eps={p.epsilon!r}")
    return p.gap


def _require_margin(p: BoundParams) -> float:
    margin = f(p.mu * p.eta, p.exp_w) - p.lam * p.eta
    if margin <= 0:
        raise DomainError("lambda must satisfy lambda < F(mu eta) / eta")
    return margin


def _w_term(scale: float, argument: float) -> float:
    """scale * W(argument)."""
    return scale * script_w(argument)


def _sanov_floor(p: BoundParams) -> float:
    inner = p.eta / (96 * (2 * p.eta + 1) * (p.x_card - p.kappa * (1 - p.mu)))
    return math.exp(max(p.x_card / (p.kappa * p.mu), script_w(inner)))


def _sanov_eta_term(p: BoundParams, eta_minus: float) -> float:
    a = eta_minus
    log_arg = (
        math.log(a / p.x_card) + (p.x_card / a) * math.log(p.delta) - a / p.x_card
    )
    return p.x_card / a * script_w_log(log_arg)


def sanov_sample_size(p: BoundParams) -> tuple[float, float]:
    """
    The two lower bounds of the independent-case Sanov statement.

    The second bound depends on N through eta_N^-, so N is iterated to a
    fixed point: N -> max(floor, bound(eta_N^-(N))), doubling N while
    eta_N^- is undefined, until N changes by less than one sample.

    Returns:
        (floor, eta_term) at the fixed point
    """
    floor = _sanov_floor(p)
    N = floor
    eta_term = math.inf
    for _ in range(FIXED_POINT_MAX_ITER):
        try:
            adjusted = kappa_prime(p.kappa, N, p.x_card)
            eta_minus = eta_n_minus(N, p.eta, adjusted, p.x_card)
        except DomainError:
            N *= 2.0
            continue
        eta_term = _sanov_eta_term(p, eta_minus)
        updated = max(floor, eta_term)
        if abs(updated - N) < 1.0:
            return floor, eta_term
        N = updated
    logger.warning(
        "Sanov sample size did not settle after %d steps", FIXED_POINT_MAX_ITER
    )
    return floor, max(eta_term, N)


def _two_node_terms(p: BoundParams) -> dict[str, float]:
    gap = _require_gap(p)
    margin = _require_margin(p)
    w = p.exp_w
    log48 = math.log(48 / p.delta)
    return {
        "mu_balance": LOG24 / margin,
        "dependent_shift": log48 / f(p.eta * (1 - p.mu), w),
        "lambda_eta": log48 / f(p.lam * p.eta, w),
        "lambda_epsilon": log48 / f(p.epsilon * (1 - p.lam), w),
        "theta_complement": math.log(24 / (1 - p.big_theta)) / f(gap, w),
        "theta_half_gap": math.log(24 / p.big_theta) / f_tilde(gap / 2, w),
        "half_gap": log48 / f(gap / 2, w),
        "penalty": _w_term(
            p.kappa / (p.epsilon * p.lam),
            p.epsilon * p.lam * p.big_theta ** (1 / p.kappa) / p.kappa,
        ),
    }


def _two_node_independent_chernoff(p: BoundParams) -> dict[str, float]:
    margin = _require_margin(p)
    level = min(p.lam * p.eta, p.eta * (1 - p.mu))
    return {
        "mu_balance": LOG24 / margin,
        "independent_level": math.log(48 / p.delta) / f(level, p.exp_w),
    }


def _two_node_independent_sanov(p: BoundParams) -> dict[str, float]:
    floor, eta_term = sanov_sample_size(p)
    return {"sanov_floor": floor, "sanov_eta_minus": eta_term}


def _two_node_combined(p: BoundParams) -> dict[str, float]:
    gap = _require_gap(p)
    w = p.exp_w
    log48 = math.log(48 / p.delta)
    terms = _two_node_independent_sanov(p)
    terms.update(
        {
            "theta_complement": math.log(24 / (1 - p.big_theta)) / f(gap, w),
            "theta_half_gap": math.log(24 / p.big_theta) / f_tilde(gap / 2, w),
            "half_gap": log48 / f(gap / 2, w),
            "lambda_epsilon": log48 / f(p.epsilon * (1 - p.lam), w),
            "penalty": _w_term(
                p.kappa / (p.epsilon * p.lam),
                p.epsilon * p.lam * p.big_theta ** (1 / p.kappa) / p.kappa,
            ),
        }
    )
    return terms


def _free_params(p: BoundParams) -> int:
    extra = p.param_count - p.n
    if extra <= 0:
        raise DomainError("need |G| > n for the n-node statements")
    if p.d < 1:
        raise DomainError("the n-node statements need d >= 1")
    return extra


def _theta_complement(p: BoundParams, gap: float) -> float:
    return p.m / (1 - p.theta) * math.log(24 / (1 - p.big_theta)) / f(gap, p.exp_w)


def _stratum_term(p: BoundParams, factor: float, count: float) -> float:
    scale = 3 / ((1 - p.theta) * p.theta**2)
    sets = p.separating_count * 2**p.separating_size
    return scale * math.log(factor * count * sets / p.delta)


def _n_node_tolerance(p: BoundParams) -> dict[str, float]:
    gap = _require_gap(p)
    extra = _free_params(p)
    w = p.exp_w
    E = p.edge_count
    penalty_scale = 3 * p.kappa * extra
    return {
        "log_likelihood_accuracy": n_sub_n(p.zeta / 3, p.delta / 6, p.n, p.d),
        "theta_complement": _theta_complement(p, gap),
        "penalty": _w_term(
            penalty_scale / p.zeta,
            p.zeta * p.big_theta ** (E / (p.kappa * extra)) / penalty_scale,
        ),
        "stratum_chernoff": _stratum_term(p, 3, E),
        "half_gap": p.m
        / (1 - p.theta)
        * max(
            math.log(24 / (1 - p.big_theta)) / f_tilde(gap / 2, w),
            math.log(72 * E * p.separating_count / p.delta) / f(gap / 2, w),
        ),
    }


def _n_node_skeleton(p: BoundParams) -> dict[str, float]:
    gap = _require_gap(p)
    extra = _free_params(p)
    w = p.exp_w
    E = p.edge_count
    f_mu = f(p.mu * p.eta, w)
    scale = 4 * p.m_hat * p.kappa * extra / ((1 - p.theta) * p.L * f_mu)
    return {
        "theta_complement": _theta_complement(p, gap),
        "log_likelihood_accuracy": n_sub_n(
            p.L * (1 - p.theta) * f_mu / (4 * p.m_hat), p.delta / 10, p.n, p.d
        ),
        "stratum_chernoff": _stratum_term(p, 5, E),
        "half_gap": p.m_hat
        / (1 - p.theta)
        * max(
            math.log(48 / f_mu) / f_tilde(gap / 2, w),
            math.log(120 * E * p.separating_count / p.delta) / f(gap / 2, w),
        ),
        "superfluous_chernoff": _stratum_term(p, 5, p.L),
        "superfluous_shift": p.m_hat
        / (1 - p.theta)
        * math.log(120 * p.separating_size * p.L / p.delta)
        / f(p.eta * (1 - p.mu), w),
        "mu_balance": 4 * p.m_hat * LOG24 / (f_mu * (1 - p.theta)),
        "penalty": _w_term(scale, p.big_theta ** (E / (extra * p.kappa)) / scale),
    }


def _n_node_sanov(p: BoundParams) -> dict[str, float]:
    gap = _require_gap(p)
    extra = _free_params(p)
    w = p.exp_w
    E = p.edge_count
    budget = p.kappa * extra - p.L * p.x_card
    if budget <= 0:
        raise DomainError("need kappa (|G| - n) > L |X|")
    ratio = p.eta / (2 * p.eta + 1)
    a = ratio / (16 * p.x_card)
    # (delta / 3L)^(1/|X|) scales the argument down so the bound grows as delta -> 0
    stratum_arg = a * math.exp(-a) * (p.delta / (3 * p.L)) ** (1 / p.x_card)
    penalty_scale = 800 * p.m_hat * budget / ((1 - p.theta) * p.L * ratio)
    return {
        "theta_complement": _theta_complement(p, gap),
        "log_likelihood_accuracy": n_sub_n(
            (1 - p.theta) / p.m_hat * p.L / 800 * ratio, p.delta / 6, p.n, p.d
        ),
        "stratum_chernoff": _stratum_term(p, 3, E),
        "sanov_stratum": _w_term(
            16 * p.x_card * p.m_hat / (ratio * (1 - p.theta)), stratum_arg
        ),
        "penalty": _w_term(
            penalty_scale, p.big_theta ** (E / budget) / penalty_scale
        ),
    }


_THEOREMS = {
    Theorem.TWO_NODE: _two_node_terms,
    Theorem.TWO_NODE_INDEPENDENT_CHERNOFF: _two_node_independent_chernoff,
    Theorem.TWO_NODE_INDEPENDENT_SANOV: _two_node_independent_sanov,
    Theorem.TWO_NODE_COMBINED: _two_node_combined,
    Theorem.N_NODE_TOLERANCE: _n_node_tolerance,
    Theorem.N_NODE_SKELETON: _n_node_skeleton,
    Theorem.N_NODE_SANOV: _n_node_sanov,
}


def theorem_terms(theorem: Theorem | str, params: BoundParams) -> dict[str, float]:
    """
    Every labeled lower bound on N of a sample-size statement.

    Raises:
        DomainError: If a side condition of the statement is violated
    """
    theorem = Theorem(theorem)
    terms = _THEOREMS[theorem](params)
    logger.debug("%s terms: %s", theorem.value, terms)
    return terms


def theorem_sample_size(theorem: Theorem | str, params: BoundParams) -> float:
    """The largest of the statement's lower bounds on N."""
    return max(theorem_terms(theorem, params).values())


def asymptotic_order(theorem: Theorem | str, params: BoundParams) -> float:
    """
    Leading order of the n-node sample sizes, without logarithmic factors.

    tolerance: max(log(n) m / eps^2, (n / zeta)^2) log(1/delta)
    skeleton:  max(m / eps^2, (n m_hat / eps^2)^2) log(1/delta)
    sanov:     max(m / eps^2, (n m_hat / eps)^2) log(1/delta)
    """
    theorem = Theorem(theorem)
    p = params
    log_delta = math.log(1 / p.delta)
    if theorem is Theorem.N_NODE_TOLERANCE:
        lead = max(math.log(p.n) * p.m / p.epsilon**2, (p.n / p.zeta) ** 2)
    elif theorem is Theorem.N_NODE_SKELETON:
        lead = max(p.m / p.epsilon**2, (p.n * p.m_hat / p.epsilon**2) ** 2)
    elif theorem is Theorem.N_NODE_SANOV:
        lead = max(p.m / p.epsilon**2, (p.n * p.m_hat / p.epsilon) ** 2)
    else:
        raise DomainError(f"no asymptotic order for {theorem.value}")
    return lead * log_delta
