"""Tests for the bounds module."""

import math

import numpy as np
import pytest
from scipy.special import lambertw

from betaboost.bounds import (
    K1,
    MAX_DELTA,
    BoundParams,
    Theorem,
    asymptotic_order,
    eta_n_minus,
    f,
    f_tilde,
    g_delta,
    g_delta_inverse,
    g_delta_tilde_inverse,
    gamma_max,
    kappa_prime,
    n_plogp,
    n_sub_n,
    plogp_positive_deviation_bound,
    sanov_log_beta_bound,
    sanov_log_beta_bound_refined,
    sanov_sample_size,
    script_f_n,
    script_f_n_tilde,
    script_f_n_tilde_inverse,
    script_w,
    script_w_log,
    theorem_sample_size,
    theorem_terms,
)
from betaboost.errors import DomainError
from betaboost.stepcdf import exact_beta_cdf


def loglog_slope(xs, ys):
    return np.polyfit(np.log(xs), np.log(ys), 1)[0]


class TestScriptW:
    def test_at_one_over_e(self):
        assert script_w(1 / math.e) == pytest.approx(1.0, abs=1e-12)

    def test_round_trip(self):
        for x in np.geomspace(1e-9, 1 / math.e, 200):
            y = script_w(float(x))
            assert y >= 1.0
            assert abs(y * math.exp(-y) - x) <= 1e-12

    def test_matches_lower_lambert_branch(self):
        for x in [1e-6, 1e-3, 0.05, 0.2, 0.3]:
            expected = -lambertw(-x, -1).real
            assert script_w(x) == pytest.approx(expected, rel=1e-10)

    def test_log_argument_agrees(self):
        assert script_w_log(math.log(1e-5)) == pytest.approx(script_w(1e-5), rel=1e-12)

    def test_log_argument_beyond_float_range(self):
        y = script_w_log(-1000.0)
        assert y - math.log(y) == pytest.approx(1000.0, rel=1e-12)

    def test_grows_like_log(self):
        # W(x) = log(1/x) + log log(1/x) + o(1)
        x = 1e-12
        lead = math.log(1 / x) + math.log(math.log(1 / x))
        assert script_w(x) == pytest.approx(lead, rel=0.02)

    @pytest.mark.parametrize("x", [0.0, -0.1, 0.5])
    def test_domain(self, x):
        with pytest.raises(DomainError):
            script_w(x)


class TestConcentrationExponents:
    def test_f_tilde_is_increasing(self):
        deltas = np.linspace(1e-4, MAX_DELTA, 500)
        values = [f_tilde(float(d)) for d in deltas]
        assert np.all(np.diff(values) >= 0)

    def test_plain_reading_is_increasing(self):
        deltas = np.linspace(1e-4, MAX_DELTA, 500)
        values = [f_tilde(float(d), exp_w=False) for d in deltas]
        assert np.all(np.diff(values) >= 0)

    def test_quadratic_branch_for_small_gaps(self):
        assert f_tilde(0.01) == pytest.approx(0.01**2 / K1)

    def test_f_is_capped(self):
        for d in np.linspace(0.01, MAX_DELTA, 50):
            assert f(float(d)) <= 1 / 24

    @pytest.mark.parametrize("delta", [0.0, -0.1, 3.0])
    def test_gap_domain(self, delta):
        with pytest.raises(DomainError):
            f_tilde(delta)


class TestTailFunctions:
    def test_tail_decreases_in_n(self):
        values = [script_f_n_tilde(N, 0.5) for N in (10, 100, 1000, 10_000)]
        assert np.all(np.diff(values) < 0)
        assert script_f_n(1, 0.5) <= 24

    @pytest.mark.parametrize("N,gamma", [(1000, 0.05), (1e6, 0.05), (5000, 1.0)])
    def test_tilde_inverse_round_trip(self, N, gamma):
        delta = script_f_n_tilde_inverse(N, gamma)
        assert script_f_n_tilde(N, delta) == pytest.approx(gamma, rel=1e-10)

    def test_tilde_inverse_out_of_range(self):
        with pytest.raises(DomainError):
            script_f_n_tilde_inverse(100, 1.0)

    @pytest.mark.parametrize("delta", [0.05, 0.5, 2.0])
    @pytest.mark.parametrize("gamma", [1e-4, 0.05, 1.0])
    def test_g_inverse_round_trip(self, delta, gamma):
        N = g_delta_inverse(delta, gamma)
        assert g_delta(delta, N) == pytest.approx(gamma, rel=1e-10)

    def test_tilde_inverse_dominates(self):
        # F-tilde >= F, so its inverse needs no more samples
        assert g_delta_tilde_inverse(0.5, 0.05) <= g_delta_inverse(0.5, 0.05)

    def test_g_inverse_domain(self):
        with pytest.raises(DomainError):
            g_delta_inverse(0.5, 0.0)


class TestSampleSizes:
    def test_n_plogp_formula(self):
        expected = 3 * (1 + math.log(2)) ** 2 / 0.01 * math.log(3 / 0.05)
        assert n_plogp(0.1, 0.05) == pytest.approx(expected)

    def test_n_plogp_slope(self):
        eps = np.geomspace(1e-4, 1e-2, 10)
        sizes = [n_plogp(float(e), 0.05) for e in eps]
        assert loglog_slope(1 / eps, sizes) == pytest.approx(2.0, abs=0.15)

    def test_n_plogp_domain(self):
        with pytest.raises(DomainError):
            n_plogp(0.5, 0.05)
        with pytest.raises(DomainError):
            n_plogp(0.1, 1.0)

    def test_n_sub_n_needs_enough_nodes(self):
        with pytest.raises(DomainError):
            n_sub_n(0.1, 0.05, 5, 2)
        assert n_sub_n(0.1, 0.05, 10, 2) > 0

    def test_gamma_max(self):
        N = 1e9
        assert gamma_max(N, 0.5, 0.05) == pytest.approx(
            f(0.025) - math.log(24) / N
        )
        assert gamma_max(10, 0.5, 0.05) < 0

    def test_kappa_prime_tends_to_kappa(self):
        assert kappa_prime(0.5, 1e9) == pytest.approx(0.5, abs=1e-8)
        with pytest.raises(DomainError):
            kappa_prime(0.5, 1.0)

    def test_eta_minus_limit(self):
        eta = 0.1
        value = eta_n_minus(1e9, eta, kappa_prime(0.5, 1e9))
        assert value == pytest.approx(eta / (144 * (2 * eta + 1)), rel=0.01)

    def test_eta_minus_needs_large_n(self):
        with pytest.raises(DomainError):
            eta_n_minus(10, 0.1, 0.5)

    def test_plogp_deviation(self):
        assert plogp_positive_deviation_bound(0, 0.1) == 5.0
        assert plogp_positive_deviation_bound(1800, 0.1) == pytest.approx(5 / math.e)


class TestSanovBounds:
    def test_bounds_exact_beta(self):
        N, eta, gamma = 100, 0.1, 0.02
        log_beta = math.log(exact_beta_cdf(N, eta).cumulative_at(gamma))
        assert sanov_log_beta_bound(N, eta, gamma) >= log_beta

    def test_bound_turns_negative_for_large_n(self):
        assert sanov_log_beta_bound(10**7, 0.1, 0.02) < 0

    def test_gamma_must_be_below_eta(self):
        with pytest.raises(DomainError):
            sanov_log_beta_bound(100, 0.1, 0.1)

    def test_refined_domain(self):
        y = 0.1 / 1.2
        assert math.isfinite(sanov_log_beta_bound_refined(100, 0.1, y / 4))
        with pytest.raises(DomainError):
            sanov_log_beta_bound_refined(100, 0.1, y / 2)

    def test_fixed_point(self):
        floor, eta_term = sanov_sample_size(BoundParams())
        assert floor > 0
        assert eta_term > 0
        assert math.isfinite(eta_term)


class TestTheorems:
    @pytest.mark.parametrize("theorem", list(Theorem))
    def test_defaults_give_finite_positive_sizes(self, theorem):
        terms = theorem_terms(theorem, BoundParams())
        assert terms
        assert all(v > 0 and math.isfinite(v) for v in terms.values())
        assert theorem_sample_size(theorem, BoundParams()) == max(terms.values())

    def test_plain_reading(self):
        params = BoundParams(exp_w=False)
        assert theorem_sample_size(Theorem.TWO_NODE, params) > 0

    def test_accepts_names(self):
        assert theorem_terms("two-node", BoundParams()) == theorem_terms(
            Theorem.TWO_NODE, BoundParams()
        )

    def test_lambda_side_condition(self):
        with pytest.raises(DomainError):
            theorem_terms(Theorem.TWO_NODE, BoundParams(lam=0.9))

    def test_eta_below_epsilon(self):
        with pytest.raises(DomainError):
            theorem_terms(Theorem.TWO_NODE, BoundParams(epsilon=0.05, eta=0.1))

    def test_n_node_needs_free_parameters(self):
        params = BoundParams(num_params=10)
        with pytest.raises(DomainError):
            theorem_terms(Theorem.N_NODE_TOLERANCE, params)

    def test_n_node_sanov_budget(self):
        params = BoundParams(kappa=0.1)
        with pytest.raises(DomainError):
            theorem_terms(Theorem.N_NODE_SANOV, params)

    def test_param_validation(self):
        with pytest.raises(DomainError):
            BoundParams(lam=1.5)
        with pytest.raises(DomainError):
            BoundParams(kappa=0.0)

    def test_tolerance_slope_in_zeta(self):
        zetas = np.geomspace(1e-3, 1e-2, 8)
        sizes = [
            theorem_sample_size(Theorem.N_NODE_TOLERANCE, BoundParams(zeta=float(z)))
            for z in zetas
        ]
        assert loglog_slope(1 / zetas, sizes) == pytest.approx(2.0, abs=0.15)

    def test_skeleton_slope_in_epsilon(self):
        eps = np.geomspace(0.01, 0.1, 8)
        sizes = [
            theorem_sample_size(
                Theorem.N_NODE_SKELETON, BoundParams(epsilon=float(e), eta=float(e) / 2)
            )
            for e in eps
        ]
        assert loglog_slope(1 / eps, sizes) == pytest.approx(4.0, abs=0.15)

    def test_sanov_slope_in_epsilon(self):
        eps = np.geomspace(0.01, 0.1, 8)
        sizes = [
            theorem_sample_size(
                Theorem.N_NODE_SANOV, BoundParams(epsilon=float(e), eta=float(e) / 2)
            )
            for e in eps
        ]
        assert loglog_slope(1 / eps, sizes) == pytest.approx(2.0, abs=0.15)

    def test_asymptotic_order(self):
        params = BoundParams(zeta=1e-3)
        expected = (10 / 1e-3) ** 2 * math.log(1 / 0.05)
        assert asymptotic_order(Theorem.N_NODE_TOLERANCE, params) == pytest.approx(
            expected
        )
        with pytest.raises(DomainError):
            asymptotic_order(Theorem.TWO_NODE, params)
